"""Raw DAS record -> frequency x distance feature matrix."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dasio import DasRecord, TrialMetadata

STD_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """One-sided STFT magnitudes, shape (n_frames, n_bins, n_channels).

    ``bin_indices`` are the DFT bin numbers of the retained bins, so the
    frequency of column ``k`` is ``bin_indices[k] * bin_width_hz``.
    """

    magnitudes: np.ndarray
    bin_width_hz: float
    frame_times_s: np.ndarray
    bin_indices: np.ndarray
    channel_positions_m: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def n_bins(self) -> int:
        return self.magnitudes.shape[1]

    @property
    def n_channels(self) -> int:
        return self.magnitudes.shape[2]

    @property
    def freqs_hz(self) -> np.ndarray:
        return self.bin_indices * self.bin_width_hz


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray
    feature_layout: list[tuple[float, float]]
    window_ids: list[tuple[str, int]]

    @property
    def column_names(self) -> list[str]:
        return [f"L{pos:g}_F{freq:g}" for pos, freq in self.feature_layout]

    def to_csv(self) -> str:
        lines = [",".join(self.column_names + ["y"])]
        for row, target in zip(self.X, self.y):
            lines.append(",".join(repr(float(v)) for v in row) + "," + repr(float(target)))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class Scaler:
    means: np.ndarray
    stds: np.ndarray

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.asarray(d["means"], dtype=float), np.asarray(d["stds"], dtype=float))


def select_segment(record: DasRecord, start_m: float, length_m: float) -> DasRecord:
    """Channels whose positions fall in ``[start_m, start_m + length_m)``."""
    eps = 1e-9 * record.channel_spacing
    pos = record.channel_positions
    mask = (pos >= start_m - eps) & (pos < start_m + length_m - eps)
    idx = np.flatnonzero(mask)
    if length_m <= 0 or idx.size == 0:
        raise ValueError("segment outside record")
    if idx.size == record.n_channels:
        return record
    return DasRecord(
        record.samples[:, idx[0] : idx[-1] + 1],
        record.fs,
        record.channel_spacing,
        float(pos[idx[0]]),
    )


def taper(name: str, n: int) -> np.ndarray:
    if name in ("rect", "rectangular", "boxcar"):
        return np.ones(n)
    if name in ("hann", "hanning"):
        # periodic Hann
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    raise ValueError(f"unknown taper {name!r}")


def frame_geometry(n_samples: int, fs: float, window_s: float, hop_s: float) -> tuple[int, int, int]:
    """(window length, hop, frame count) in samples."""
    win = int(round(window_s * fs))
    hop = int(round(hop_s * fs))
    if win < 2:
        raise ValueError("window must span at least 2 samples")
    if hop < 1:
        raise ValueError("hop must be positive")
    if n_samples < win:
        raise ValueError("record too short")
    return win, hop, (n_samples - win) // hop + 1


def stft_frames(
    record: DasRecord,
    window_s: float,
    hop_s: float,
    window_fn: str = "hann",
    max_freq_hz: float | None = None,
) -> Spectrogram:
    """Per-channel STFT magnitudes along the time axis.

    ``max_freq_hz`` only drops bins at or above that frequency to save
    memory on long windows; it does not remove DC (see ``band_limit``).
    """
    win, hop, n_frames = frame_geometry(record.n_samples, record.fs, window_s, hop_s)
    n_bins = win // 2 + 1
    bin_width = record.fs / win
    if max_freq_hz is not None:
        n_bins = min(n_bins, int(np.ceil(max_freq_hz / bin_width - 1e-9)))
        n_bins = max(n_bins, 1)
    w = taper(window_fn, win)[:, None]
    out = np.empty((n_frames, n_bins, record.n_channels))
    for i in range(n_frames):
        seg = record.samples[i * hop : i * hop + win].astype(np.float64)
        spec = np.fft.rfft(seg * w, axis=0)
        out[i] = np.abs(spec[:n_bins])
    return Spectrogram(
        magnitudes=out,
        bin_width_hz=bin_width,
        frame_times_s=np.arange(n_frames) * hop / record.fs,
        bin_indices=np.arange(n_bins),
        channel_positions_m=record.channel_positions,
    )


def band_limit(spec: Spectrogram, f_max: float) -> Spectrogram:
    """Keep bins strictly inside ``(0, f_max)``."""
    freqs = spec.freqs_hz
    keep = (spec.bin_indices > 0) & (freqs < f_max - 1e-9 * spec.bin_width_hz)
    if not keep.any():
        raise ValueError("empty band")
    return replace(spec, magnitudes=spec.magnitudes[:, keep, :], bin_indices=spec.bin_indices[keep])


def _layout(spec: Spectrogram) -> list[tuple[float, float]]:
    return [(float(p), float(f)) for p in spec.channel_positions_m for f in spec.freqs_hz]


def build_feature_matrix(specs: list[tuple[Spectrogram, TrialMetadata]]) -> FeatureMatrix:
    """One row per frame, columns channel-major (all bins of channel 1 first)."""
    if not specs:
        raise ValueError("no spectrograms")
    ref = specs[0][0]
    rows, y, ids = [], [], []
    for spec, meta in specs:
        if (
            spec.bin_width_hz != ref.bin_width_hz
            or not np.array_equal(spec.bin_indices, ref.bin_indices)
            or spec.channel_positions_m.shape != ref.channel_positions_m.shape
            or not np.allclose(spec.channel_positions_m, ref.channel_positions_m, rtol=0, atol=1e-9)
        ):
            raise ValueError("incompatible spectrograms")
        # (frames, bins, channels) -> (frames, channels, bins) -> flatten
        rows.append(spec.magnitudes.transpose(0, 2, 1).reshape(spec.n_frames, -1))
        y.extend([meta.exposure_length_m] * spec.n_frames)
        ids.extend((meta.trial_id, i) for i in range(spec.n_frames))
    return FeatureMatrix(
        X=np.vstack(rows),
        y=np.asarray(y, dtype=float),
        feature_layout=_layout(ref),
        window_ids=ids,
    )


def fit_scaler(X: np.ndarray) -> Scaler:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("insufficient data")
    means = X.mean(axis=0)
    # exact centre for constant columns so they map to exact zeros
    const = np.all(X == X[0], axis=0)
    means[const] = X[0, const]
    stds = X.std(axis=0)
    return Scaler(means, np.maximum(stds, STD_FLOOR))


def apply_scaler(s: Scaler, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != s.means.shape[0]:
        raise ValueError(f"dimension mismatch: expected {s.means.shape[0]} columns, got {X.shape[-1]}")
    return (X - s.means) / s.stds
