"""Synthetic DAS trials for a free-span cable under wave excitation.

The exposed span is modelled as a pinned-pinned Euler-Bernoulli beam. Each
channel inside the span sees, per mode, a forced response at the wave
frequency (scaled by the single-DOF magnification factor) plus a resonant
component at the damped natural frequency; both follow the mode shape.
Channels outside the span carry measurement noise and a 10 % leak-through
of the antinode response. Amplitudes are in arbitrary units.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterator

import numpy as np

from .dasio import DasRecord, TrialMetadata

LEAK_THROUGH = 0.1


@dataclass(frozen=True)
class SimConfig:
    exposure_length_m: float = 6.0
    span_start_m: float = 8.0
    wave_height_m: float = 0.15
    wave_period_s: float = 1.25
    duration_s: float = 120.0
    fs: float = 2000.0
    channel_spacing: float = 0.8
    n_channels: int = 40
    first_channel_position: float = 0.0
    EI: float = 4.73e3  # N m^2, places f1(6 m) near 1.5 Hz
    mu: float = 4.0  # kg/m
    n_modes: int = 3
    modal_damping: float = 0.03
    resonance_gain: float = 0.5  # resonant amplitude relative to the static modal amplitude
    noise_rms: float = 0.05  # relative to peak noise-free response
    amplitude_jitter: float = 0.0  # trial-to-trial relative spread of forcing amplitudes
    gauge_smoothing: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.exposure_length_m > 0:
            raise ValueError("exposure_length_m must be positive")
        if not (self.EI > 0 and self.mu > 0):
            raise ValueError("EI and mu must be positive")
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if not 0 < self.modal_damping < 1:
            raise ValueError("modal_damping must be in (0, 1)")
        if not (self.wave_period_s > 0 and self.duration_s > 0 and self.fs > 0):
            raise ValueError("wave_period_s, duration_s and fs must be positive")
        if self.n_channels < 1 or not self.channel_spacing > 0:
            raise ValueError("invalid channel geometry")
        if self.noise_rms < 0 or self.amplitude_jitter < 0:
            raise ValueError("noise_rms and amplitude_jitter must be non-negative")


def natural_frequencies(L: float, EI: float, mu: float, n_modes: int) -> np.ndarray:
    """Pinned-pinned beam: f_n = n^2 pi / (2 L^2) * sqrt(EI / mu)."""
    n = np.arange(1, n_modes + 1)
    return n**2 * math.pi / (2.0 * L**2) * math.sqrt(EI / mu)


def mode_shape(n: int, L: float, x):
    """sin(n pi x / L) inside the span, zero outside."""
    x = np.asarray(x, dtype=float)
    inside = (x >= 0) & (x <= L)
    out = np.where(inside, np.sin(n * math.pi * np.clip(x, 0, L) / L), 0.0)
    return float(out) if out.ndim == 0 else out


def magnification(r, zeta: float):
    r = np.asarray(r, dtype=float)
    return 1.0 / np.sqrt((1.0 - r**2) ** 2 + (2.0 * zeta * r) ** 2)


def _modal_series(cfg: SimConfig, rng: np.random.Generator, t: np.ndarray) -> np.ndarray:
    """(n_modes, n_samples) modal time histories, before mode shapes."""
    f_w = 1.0 / cfg.wave_period_s
    f_n = natural_frequencies(cfg.exposure_length_m, cfg.EI, cfg.mu, cfg.n_modes)
    zeta = cfg.modal_damping
    wave_phase = rng.uniform(0, 2 * math.pi)
    wave_amp = cfg.wave_height_m * (1.0 + cfg.amplitude_jitter * rng.standard_normal())
    out = np.empty((cfg.n_modes, t.size))
    forced = np.sin(2 * math.pi * f_w * t + wave_phase)
    for k in range(cfg.n_modes):
        n = k + 1
        participation = 1.0 / n**2
        forced_amp = wave_amp * participation * magnification(f_w / f_n[k], zeta)
        res_amp = (
            cfg.wave_height_m
            * participation
            * cfg.resonance_gain
            * (1.0 + cfg.amplitude_jitter * rng.standard_normal())
        )
        f_d = f_n[k] * math.sqrt(1.0 - zeta**2)
        res = np.sin(2 * math.pi * f_d * t + rng.uniform(0, 2 * math.pi))
        out[k] = forced_amp * forced + res_amp * res
    return out


def noise_free_response(cfg: SimConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """(n_samples, n_channels) structural response without measurement noise."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    n_samples = int(round(cfg.duration_s * cfg.fs))
    t = np.arange(n_samples) / cfg.fs
    modal = _modal_series(cfg, rng, t)
    pos = cfg.first_channel_position + cfg.channel_spacing * np.arange(cfg.n_channels)
    xi = pos - cfg.span_start_m
    L = cfg.exposure_length_m
    inside = (xi >= 0) & (xi <= L)
    shapes = np.stack([mode_shape(k + 1, L, xi) for k in range(cfg.n_modes)], axis=1)
    # outside the span: a fraction of the antinode response of every mode
    shapes[~inside] = LEAK_THROUGH
    resp = modal.T @ shapes.T
    if cfg.gauge_smoothing and cfg.n_channels > 1:
        # gauge length of two channel spacings
        resp = 0.5 * (resp + np.concatenate([resp[:, 1:], resp[:, -1:]], axis=1))
    return resp


def simulate_trial(
    cfg: SimConfig,
    section_id: str = "S1",
    trial_index: int = 1,
    trial_id: str | None = None,
) -> tuple[DasRecord, TrialMetadata]:
    rng = np.random.default_rng(cfg.seed)
    resp = noise_free_response(cfg, rng)
    peak = float(np.max(np.abs(resp)))
    if cfg.noise_rms > 0:
        resp = resp + cfg.noise_rms * peak * rng.standard_normal(resp.shape)
    record = DasRecord(
        resp.astype(np.float32),
        fs=cfg.fs,
        channel_spacing=cfg.channel_spacing,
        first_channel_position=cfg.first_channel_position,
    )
    if trial_id is None:
        trial_id = make_trial_id(section_id, cfg.exposure_length_m, cfg.wave_height_m, cfg.wave_period_s, trial_index)
    meta = TrialMetadata(
        trial_id=trial_id,
        section_id=section_id,
        exposure_length_m=float(cfg.exposure_length_m),
        wave_height_m=float(cfg.wave_height_m),
        wave_period_s=float(cfg.wave_period_s),
        trial_index=int(trial_index),
        duration_s=record.duration_s,
    )
    return record, meta


def _fmt(v: float) -> str:
    return f"{v:g}".replace(".", "p")


def make_trial_id(section_id: str, L: float, H: float, T: float, trial_index: int) -> str:
    return f"{section_id}_L{_fmt(L)}_H{_fmt(H)}_T{_fmt(T)}_r{trial_index}"


# --- experimental grid ------------------------------------------------------


@dataclass(frozen=True)
class WaveCondition:
    wave_height_m: float
    wave_period_s: float


@dataclass(frozen=True)
class SectionSpec:
    """Per-section simulator overrides (e.g. a slightly different EI)."""

    section_id: str
    overrides: dict = field(default_factory=dict)


def _default_sections() -> list[SectionSpec]:
    return [SectionSpec("S1"), SectionSpec("S2", {"EI": 4.9e3, "noise_rms": 0.06})]


def _default_waves() -> list[WaveCondition]:
    return [WaveCondition(h, p) for h in (0.15, 0.30) for p in (1.25, 2.5)]


@dataclass(frozen=True)
class GridSpec:
    sections: list[SectionSpec] = field(default_factory=_default_sections)
    exposure_lengths_m: list[float] = field(default_factory=lambda: [2.0, 4.0, 6.0, 8.0, 10.0])
    wave_conditions: list[WaveCondition] = field(default_factory=_default_waves)
    n_trials: int = 3
    sim: dict = field(default_factory=dict)  # SimConfig overrides shared by every trial

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if not self.sections or not self.exposure_lengths_m or not self.wave_conditions:
            raise ValueError("grid must have sections, exposure lengths and wave conditions")
        base = set(SimConfig.__dataclass_fields__)
        for overrides in [self.sim] + [s.overrides for s in self.sections]:
            unknown = set(overrides) - base
            if unknown:
                raise ValueError(f"unknown simulator fields {sorted(unknown)}")

    def __len__(self):
        return len(self.sections) * len(self.exposure_lengths_m) * len(self.wave_conditions) * self.n_trials

    def to_dict(self) -> dict:
        return {
            "sections": [{"section_id": s.section_id, **s.overrides} for s in self.sections],
            "exposure_lengths_m": list(self.exposure_lengths_m),
            "wave_conditions": [asdict(w) for w in self.wave_conditions],
            "n_trials": self.n_trials,
            "sim": dict(self.sim),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        kw = {}
        if "sections" in d:
            kw["sections"] = [
                SectionSpec(str(s["section_id"]), {k: v for k, v in s.items() if k != "section_id"})
                for s in d["sections"]
            ]
        if "exposure_lengths_m" in d:
            kw["exposure_lengths_m"] = [float(v) for v in d["exposure_lengths_m"]]
        if "wave_conditions" in d:
            kw["wave_conditions"] = [
                WaveCondition(float(w["wave_height_m"]), float(w["wave_period_s"])) for w in d["wave_conditions"]
            ]
        if "n_trials" in d:
            kw["n_trials"] = int(d["n_trials"])
        if "sim" in d:
            kw["sim"] = dict(d["sim"])
        unknown = set(d) - {"sections", "exposure_lengths_m", "wave_conditions", "n_trials", "sim"}
        if unknown:
            raise ValueError(f"unknown grid fields {sorted(unknown)}")
        return cls(**kw)


def grid_configs(grid: GridSpec, seed: int) -> Iterator[tuple[SimConfig, str, int]]:
    """(SimConfig, section_id, trial_index) for every cell, in a fixed order.

    Each trial gets its own seed derived from ``seed`` and its grid indices,
    so any single trial can be regenerated independently.
    """
    base = SimConfig(**grid.sim)
    cells = itertools.product(
        enumerate(grid.sections),
        enumerate(grid.exposure_lengths_m),
        enumerate(grid.wave_conditions),
        range(1, grid.n_trials + 1),
    )
    for (i_s, sec), (i_l, L), (i_w, wave), r in cells:
        ss = np.random.SeedSequence([seed, i_s, i_l, i_w, r])
        trial_seed = int(ss.generate_state(1, dtype=np.uint32)[0])
        cfg = replace(
            base,
            **sec.overrides,
            exposure_length_m=L,
            wave_height_m=wave.wave_height_m,
            wave_period_s=wave.wave_period_s,
            seed=trial_seed,
        )
        yield cfg, sec.section_id, r


def simulate_grid(grid: GridSpec, seed: int) -> Iterator[tuple[DasRecord, TrialMetadata]]:
    for cfg, section_id, r in grid_configs(grid, seed):
        yield simulate_trial(cfg, section_id, r)
