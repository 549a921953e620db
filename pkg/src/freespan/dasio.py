"""On-disk data model: DAS trial records, trial metadata and anomaly reports.

A trial is stored as two files sharing a stem:

``<stem>.das``
    42-byte packed little-endian header followed by time-major float32
    samples::

        magic            4s   b"DAS1"
        version          u16
        n_channels       u32
        n_samples        u64
        fs               f64
        channel_spacing  f64
        first_channel_position f64

``<stem>.json``
    TrialMetadata with snake_case field names.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"DAS1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIQddd")
HEADER_SIZE = _HEADER.size


class DasFormatError(ValueError):
    """Raised when a trial file or its metadata cannot be decoded."""


@dataclass(frozen=True, eq=False)
class DasRecord:
    """Time x channel matrix of strain-rate samples."""

    samples: np.ndarray
    fs: float = 2000.0
    channel_spacing: float = 0.8
    first_channel_position: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 2:
            raise ValueError("samples must be a 2-D (n_samples, n_channels) array")
        if samples.shape[0] < 1 or samples.shape[1] < 1:
            raise ValueError("record needs at least one sample and one channel")
        if not self.fs > 0:
            raise ValueError("fs must be positive")
        if not self.channel_spacing > 0:
            raise ValueError("channel_spacing must be positive")
        if not np.all(np.isfinite(samples)):
            raise ValueError("non-finite sample")
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    @property
    def channel_positions(self) -> np.ndarray:
        return self.first_channel_position + self.channel_spacing * np.arange(self.n_channels)

    def __eq__(self, other):
        if not isinstance(other, DasRecord):
            return NotImplemented
        return (
            self.fs == other.fs
            and self.channel_spacing == other.channel_spacing
            and self.first_channel_position == other.first_channel_position
            and self.samples.shape == other.samples.shape
            and self.samples.dtype == other.samples.dtype
            and np.array_equal(self.samples, other.samples)
        )


@dataclass(frozen=True)
class TrialMetadata:
    """Ground truth for one trial."""

    trial_id: str
    section_id: str
    exposure_length_m: float
    wave_height_m: float
    wave_period_s: float
    trial_index: int
    duration_s: float

    def __post_init__(self):
        if not self.exposure_length_m > 0:
            raise ValueError("exposure_length_m must be positive")
        if not self.wave_period_s > 0:
            raise ValueError("wave_period_s must be positive")
        if int(self.trial_index) != self.trial_index or self.trial_index < 1:
            raise ValueError("trial_index must be an integer >= 1")
        if not self.duration_s > 0:
            raise ValueError("duration_s must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrialMetadata":
        names = {f for f in cls.__dataclass_fields__}
        if set(d) != names:
            raise ValueError(f"expected fields {sorted(names)}, got {sorted(d)}")
        return cls(
            trial_id=str(d["trial_id"]),
            section_id=str(d["section_id"]),
            exposure_length_m=float(d["exposure_length_m"]),
            wave_height_m=float(d["wave_height_m"]),
            wave_period_s=float(d["wave_period_s"]),
            trial_index=int(d["trial_index"]),
            duration_s=float(d["duration_s"]),
        )


def check_duration(record: DasRecord, meta: TrialMetadata) -> None:
    if abs(meta.duration_s - record.duration_s) > 1.0 / record.fs:
        raise ValueError(
            f"duration_s={meta.duration_s} does not match record duration {record.duration_s}"
        )


def _stem(path) -> str:
    path = str(path)
    for ext in (".das", ".json"):
        if path.endswith(ext):
            return path[: -len(ext)]
    return path


def _das_path(path) -> Path:
    return Path(_stem(path) + ".das")


def _json_path(path) -> Path:
    return Path(_stem(path) + ".json")


def atomic_write_bytes(path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a temp file in the same directory and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def encode_record(record: DasRecord) -> bytes:
    if not np.all(np.isfinite(record.samples)):
        raise ValueError("non-finite sample")
    payload = np.ascontiguousarray(record.samples, dtype="<f4")
    if not np.all(np.isfinite(payload)):
        raise ValueError("non-finite sample")
    header = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        record.n_channels,
        record.n_samples,
        float(record.fs),
        float(record.channel_spacing),
        float(record.first_channel_position),
    )
    return header + payload.tobytes()


def decode_record(data: bytes) -> DasRecord:
    if len(data) < HEADER_SIZE or data[:4] != MAGIC:
        raise DasFormatError("not a DAS trial file")
    magic, version, n_channels, n_samples, fs, spacing, first = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise DasFormatError(f"unsupported format version {version}")
    expected = HEADER_SIZE + 4 * n_channels * n_samples
    if len(data) != expected:
        raise DasFormatError(
            f"length mismatch: header implies {expected} bytes, file has {len(data)}"
        )
    samples = np.frombuffer(data, dtype="<f4", offset=HEADER_SIZE).reshape(n_samples, n_channels)
    try:
        return DasRecord(samples.astype(np.float32), fs, spacing, first)
    except ValueError as exc:
        raise DasFormatError(str(exc)) from exc


def write_trial(record: DasRecord, meta: TrialMetadata, path) -> None:
    """Write ``<path>.das`` and ``<path>.json``."""
    check_duration(record, meta)
    payload = encode_record(record)
    sidecar = json.dumps(meta.to_dict(), indent=2) + "\n"
    atomic_write_bytes(_das_path(path), payload)
    atomic_write_text(_json_path(path), sidecar)


def read_trial(path) -> tuple[DasRecord, TrialMetadata]:
    record = decode_record(_das_path(path).read_bytes())
    try:
        meta = TrialMetadata.from_dict(json.loads(_json_path(path).read_text()))
        check_duration(record, meta)
    except (ValueError, KeyError, TypeError) as exc:
        raise DasFormatError(f"invalid metadata: {exc}") from exc
    return record, meta


def read_metadata(path) -> TrialMetadata:
    try:
        return TrialMetadata.from_dict(json.loads(_json_path(path).read_text()))
    except (ValueError, KeyError, TypeError) as exc:
        raise DasFormatError(f"invalid metadata: {exc}") from exc


def list_trials(data_dir) -> list[Path]:
    """Trial stems in ``data_dir`` that have both files, sorted by name."""
    data_dir = Path(data_dir)
    return sorted(
        Path(_stem(p)) for p in data_dir.glob("*.das") if _json_path(p).exists()
    )


# --- anomaly reports -------------------------------------------------------

REPORT_COLUMNS = (
    "trial_id",
    "section_id",
    "window_index",
    "anomaly_score",
    "label",
    "delta_l_m",
    "exposure_length_m",
    "predicted_length_m",
)


@dataclass(frozen=True)
class ReportRow:
    trial_id: str
    section_id: str
    window_index: int
    anomaly_score: float
    label: str
    delta_l_m: float
    exposure_length_m: float
    predicted_length_m: float


@dataclass
class AnomalyReport:
    rows: list[ReportRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def extend(self, other: "AnomalyReport") -> "AnomalyReport":
        self.rows.extend(other.rows)
        return self

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def summary(self) -> dict:
        """Mean score and anomalous fraction, overall and per delta-L level."""
        if not self.rows:
            return {"n_windows": 0, "mean_score": None, "fraction_anomalous": None, "by_delta_l": []}
        scores = self.column("anomaly_score").astype(float)
        anomalous = self.column("label") == "anomalous"
        dl = self.column("delta_l_m").astype(float)
        levels = []
        for level in sorted(set(dl.tolist())):
            m = dl == level
            levels.append(
                {
                    "delta_l_m": level,
                    "n_windows": int(m.sum()),
                    "mean_score": float(scores[m].mean()),
                    "median_score": float(np.median(scores[m])),
                    "fraction_anomalous": float(anomalous[m].mean()),
                }
            )
        return {
            "n_windows": len(self.rows),
            "mean_score": float(scores.mean()),
            "fraction_anomalous": float(anomalous.mean()),
            "by_delta_l": levels,
        }

    def to_csv(self) -> str:
        lines = [",".join(REPORT_COLUMNS)]
        for r in self.rows:
            lines.append(
                ",".join(
                    [
                        r.trial_id,
                        r.section_id,
                        str(r.window_index),
                        repr(float(r.anomaly_score)),
                        r.label,
                        repr(float(r.delta_l_m)),
                        repr(float(r.exposure_length_m)),
                        repr(float(r.predicted_length_m)),
                    ]
                )
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "AnomalyReport":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise DasFormatError("empty report")
        header = tuple(lines[0].split(","))
        if header != REPORT_COLUMNS:
            raise DasFormatError(f"unexpected report header {header}")
        rows = []
        for ln in lines[1:]:
            f = ln.split(",")
            rows.append(
                ReportRow(f[0], f[1], int(f[2]), float(f[3]), f[4], float(f[5]), float(f[6]), float(f[7]))
            )
        return cls(rows)


def summary_path_for(csv_path) -> Path:
    csv_path = Path(csv_path)
    base = csv_path.name[:-4] if csv_path.name.endswith(".csv") else csv_path.name
    return csv_path.with_name(base + ".summary.json")


def write_report(report: AnomalyReport, csv_path) -> Path:
    """Write the per-window CSV and ``<stem>.summary.json`` next to it."""
    csv_path = Path(csv_path)
    atomic_write_text(csv_path, report.to_csv())
    summary_path = summary_path_for(csv_path)
    atomic_write_text(summary_path, json.dumps(report.summary(), indent=2) + "\n")
    return summary_path


def read_report(csv_path) -> AnomalyReport:
    return AnomalyReport.from_csv(Path(csv_path).read_text())
