"""Two-stage monitoring pipeline: shared PLS feature extractor, per-section one-class SVMs."""

from __future__ import annotations

import json
import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from . import ocsvm as svm
from .dasio import AnomalyReport, DasRecord, ReportRow, TrialMetadata
from .pls import DEFAULT_K_MAX, PlsModel, fit_pls, predict, select_components, transform
from .preprocess import (
    FeatureMatrix,
    Scaler,
    Spectrogram,
    apply_scaler,
    band_limit,
    build_feature_matrix,
    fit_scaler,
    select_segment,
    stft_frames,
)

log = logging.getLogger(__name__)

SECTION_FORMAT = 1


@dataclass(frozen=True)
class SectionConfig:
    section_id: str
    baseline_exposure_m: float = 6.0


@dataclass(frozen=True)
class ExperimentConfig:
    segment_start_m: float = 8.0
    segment_length_m: float = 12.0
    window_s: float = 50.0
    hop_s: float = 5.0
    f_max_hz: float = 4.0
    taper: str = "hann"
    pls_K: int | None = None  # None: cross-validated
    pls_k_max: int = DEFAULT_K_MAX
    pls_exposure_lengths_m: list[float] | None = None  # None: every training length
    nu: float = svm.DEFAULT_NU
    gamma: float | None = None  # None: 1 / (K Var(T))
    train_trial_index: int = 2
    sections: list[SectionConfig] = field(
        default_factory=lambda: [SectionConfig("S1"), SectionConfig("S2")]
    )

    def __post_init__(self):
        for name in ("segment_length_m", "window_s", "hop_s", "f_max_hz", "pls_k_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.train_trial_index < 1:
            raise ValueError("train_trial_index must be >= 1")
        if self.pls_K is not None and self.pls_K < 1:
            raise ValueError("pls_K must be >= 1")
        if not 0 < self.nu <= 1:
            raise ValueError("invalid nu")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        for s in self.sections:
            if not s.baseline_exposure_m > 0:
                raise ValueError("baseline_exposure_m must be positive")

    def section(self, section_id: str) -> SectionConfig:
        for s in self.sections:
            if s.section_id == section_id:
                return s
        raise KeyError(f"section {section_id!r} not configured")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sections"] = [asdict(s) for s in self.sections]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        kw = {k: v for k, v in d.items() if k in known}
        if "sections" in kw:
            kw["sections"] = [SectionConfig(str(s["section_id"]), float(s.get("baseline_exposure_m", 6.0))) for s in kw["sections"]]
        if kw.get("pls_K") == "auto":
            kw["pls_K"] = None
        if kw.get("gamma") == "auto":
            kw["gamma"] = None
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class SectionModel:
    section_id: str
    baseline_exposure_m: float
    scaler: Scaler
    ocsvm: svm.OcsvmModel
    pls_ref: str

    def __post_init__(self):
        if not self.baseline_exposure_m > 0:
            raise ValueError("baseline_exposure_m must be positive")

    def to_dict(self) -> dict:
        return {
            "section_format": SECTION_FORMAT,
            "section_id": self.section_id,
            "baseline_exposure_m": float(self.baseline_exposure_m),
            "pls_ref": self.pls_ref,
            "scaler": self.scaler.to_dict(),
            "ocsvm": self.ocsvm.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SectionModel":
        if d.get("section_format") != SECTION_FORMAT:
            raise ValueError(f"unsupported section_format {d.get('section_format')!r}")
        return cls(
            section_id=str(d["section_id"]),
            baseline_exposure_m=float(d["baseline_exposure_m"]),
            scaler=Scaler.from_dict(d["scaler"]),
            ocsvm=svm.OcsvmModel.from_dict(d["ocsvm"]),
            pls_ref=str(d["pls_ref"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict()) + "\n"


# Trials flow through the pipeline as (data, TrialMetadata) pairs where data
# is either a raw DasRecord or its already band-limited Spectrogram.
Trial = tuple[Any, TrialMetadata]


def trial_spectrogram(record: DasRecord, cfg: ExperimentConfig) -> Spectrogram:
    seg = select_segment(record, cfg.segment_start_m, cfg.segment_length_m)
    spec = stft_frames(seg, cfg.window_s, cfg.hop_s, cfg.taper, max_freq_hz=cfg.f_max_hz)
    return band_limit(spec, cfg.f_max_hz)


def as_spectrogram(data, cfg: ExperimentConfig) -> Spectrogram:
    if isinstance(data, Spectrogram):
        return data
    if isinstance(data, DasRecord):
        return trial_spectrogram(data, cfg)
    raise TypeError(f"expected DasRecord or Spectrogram, got {type(data).__name__}")


def features(trials: Sequence[Trial], cfg: ExperimentConfig) -> FeatureMatrix:
    return build_feature_matrix([(as_spectrogram(d, cfg), m) for d, m in trials])


def split_trials(trials: Iterable[Trial], train_index: int = 2) -> tuple[list[Trial], list[Trial]]:
    """Per (section, wave condition, exposure length) group, trial ``train_index`` trains."""
    groups: "OrderedDict[tuple, list[Trial]]" = OrderedDict()
    for item in trials:
        m = item[1]
        key = (m.section_id, m.wave_height_m, m.wave_period_s, m.exposure_length_m)
        groups.setdefault(key, []).append(item)
    train, evaluate = [], []
    for key, items in groups.items():
        hits = [it for it in items if it[1].trial_index == train_index]
        if not hits:
            raise ValueError(f"missing training trial (index {train_index}) in group {key}")
        for it in items:
            (train if it[1].trial_index == train_index else evaluate).append(it)
    return train, evaluate


def delta_l(L0: float, Le: float) -> float:
    """Exposure-length change: positive for extension, negative for shortening."""
    if not (L0 > 0 and Le > 0):
        raise ValueError("exposure lengths must be positive")
    return Le - L0


def train_feature_extractor(train_trials: Sequence[Trial], cfg: ExperimentConfig) -> PlsModel:
    trials = list(train_trials)
    if cfg.pls_exposure_lengths_m is not None:
        keep = set(cfg.pls_exposure_lengths_m)
        trials = [t for t in trials if t[1].exposure_length_m in keep]
    if not trials:
        raise ValueError("no training trials")
    fm = features(trials, cfg)
    if np.all(fm.y == fm.y[0]):
        raise ValueError("degenerate target")
    N, D = fm.X.shape
    K = cfg.pls_K
    if K is None:
        groups = [tid for tid, _ in fm.window_ids]
        n_folds = min(5, len(set(groups)))
        if n_folds >= 2:
            K = select_components(fm.X, fm.y, K_max=cfg.pls_k_max, n_folds=n_folds, groups=groups)
        else:
            K = select_components(fm.X, fm.y, K_max=cfg.pls_k_max, n_folds=min(5, N))
    K = min(K, D, N - 1)
    log.info("PLS on %d windows x %d features, K=%d", N, D, K)
    return fit_pls(fm.X, fm.y, K)


def train_section(section_trials: Sequence[Trial], pls: PlsModel, cfg: ExperimentConfig) -> SectionModel:
    trials = list(section_trials)
    if not trials:
        raise ValueError("no baseline trials")
    sections = {m.section_id for _, m in trials}
    if len(sections) != 1:
        raise ValueError(f"baseline trials span several sections: {sorted(sections)}")
    lengths = {m.exposure_length_m for _, m in trials}
    if len(lengths) != 1:
        raise ValueError(f"inconsistent baseline: exposure lengths {sorted(lengths)}")
    fm = features(trials, cfg)
    T = transform(pls, fm.X)
    scaler = fit_scaler(T) if T.shape[0] >= 2 else Scaler(np.zeros(T.shape[1]), np.ones(T.shape[1]))
    Ts = apply_scaler(scaler, T)
    model = svm.fit_ocsvm(Ts, nu=cfg.nu, gamma=cfg.gamma)
    section_id = sections.pop()
    log.info(
        "section %s: %d baseline windows, %d SVs, rho=%.4g",
        section_id, Ts.shape[0], model.alphas.size, model.rho,
    )
    return SectionModel(section_id, lengths.pop(), scaler, model, pls.fingerprint())


def baseline_trials(train_trials: Sequence[Trial], section: SectionConfig) -> list[Trial]:
    return [
        t
        for t in train_trials
        if t[1].section_id == section.section_id and t[1].exposure_length_m == section.baseline_exposure_m
    ]


def score_trials(
    model: SectionModel, pls: PlsModel, eval_trials: Sequence[Trial], cfg: ExperimentConfig
) -> AnomalyReport:
    report = AnomalyReport()
    for data, meta in eval_trials:
        if meta.section_id != model.section_id:
            raise ValueError(f"wrong section: trial {meta.trial_id} is {meta.section_id}, model is {model.section_id}")
        spec = as_spectrogram(data, cfg)
        fm = build_feature_matrix([(spec, meta)])
        T = transform(pls, fm.X)
        scores = svm.decision_function(model.ocsvm, apply_scaler(model.scaler, T))
        est = predict(pls, fm.X)
        dl = delta_l(model.baseline_exposure_m, meta.exposure_length_m)
        for w, (f, e) in enumerate(zip(np.atleast_1d(scores), est)):
            report.rows.append(
                ReportRow(
                    trial_id=meta.trial_id,
                    section_id=meta.section_id,
                    window_index=w,
                    anomaly_score=float(f),
                    label=svm.label_of(f),
                    delta_l_m=float(dl),
                    exposure_length_m=float(meta.exposure_length_m),
                    predicted_length_m=float(e),
                )
            )
    return report


@dataclass
class TrainedModels:
    pls: PlsModel
    sections: dict[str, SectionModel]


def train_all(train_trials: Sequence[Trial], cfg: ExperimentConfig) -> TrainedModels:
    pls = train_feature_extractor(train_trials, cfg)
    sections = {}
    for sec in cfg.sections:
        sections[sec.section_id] = train_section(baseline_trials(train_trials, sec), pls, cfg)
    return TrainedModels(pls, sections)


def score_all(models: TrainedModels, eval_trials: Sequence[Trial], cfg: ExperimentConfig) -> AnomalyReport:
    report = AnomalyReport()
    for sid, model in models.sections.items():
        mine = [t for t in eval_trials if t[1].section_id == sid]
        report.extend(score_trials(model, models.pls, mine, cfg))
    return report
