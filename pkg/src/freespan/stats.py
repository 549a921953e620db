"""Evaluation statistics: rank tests, effect sizes, correlation, metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

EXACT_MAX_PAIRS = 400


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str  # "exact" or "normal_approx"

    __test__ = False  # not a pytest class


def _nonempty(*samples):
    out = []
    for s in samples:
        a = np.asarray(s, dtype=float).ravel()
        if a.size == 0:
            raise ValueError("empty sample")
        out.append(a)
    return out


def _pair_counts(a: np.ndarray, b: np.ndarray) -> tuple[int, int, int]:
    """(#a>b, #a<b, #ties) over all pairs, via sorting."""
    bs = np.sort(b)
    less = np.searchsorted(bs, a, side="left")  # b_j < a_i
    leq = np.searchsorted(bs, a, side="right")
    gt = int(less.sum())
    ties = int((leq - less).sum())
    lt = a.size * b.size - gt - ties
    return gt, lt, ties


def u_statistic(a, b) -> float:
    """U for sample ``a``: pairs with a_i > b_j plus half the ties."""
    a, b = _nonempty(a, b)
    gt, _, ties = _pair_counts(a, b)
    return gt + 0.5 * ties


@lru_cache(maxsize=None)
def u_distribution(m: int, n: int) -> tuple[int, ...]:
    """Number of orderings giving each U = 0..m*n for tie-free samples.

    Counts satisfy c(m, n, u) = c(m-1, n, u-n) + c(m, n-1, u): the largest
    observation either belongs to the first sample (beating all n of the
    second) or to the second.
    """
    if m == 0 or n == 0:
        return (1,)
    with_a = u_distribution(m - 1, n)
    with_b = u_distribution(m, n - 1)
    out = [0] * (m * n + 1)
    for u, c in enumerate(with_a):
        out[u + n] += c
    for u, c in enumerate(with_b):
        out[u] += c
    return tuple(out)


def exact_p_value(u: float, m: int, n: int) -> float:
    counts = u_distribution(m, n)
    total = sum(counts)
    k = int(round(u))
    lower = sum(counts[: k + 1]) / total
    upper = sum(counts[k:]) / total
    return min(1.0, 2.0 * min(lower, upper))


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def mann_whitney_u(a, b) -> TestResult:
    """Two-sided Mann-Whitney U test for sample ``a`` versus ``b``.

    Exact null distribution when n_a * n_b <= 400 and there are no ties,
    otherwise the normal approximation with tie and continuity corrections.
    """
    a, b = _nonempty(a, b)
    m, n = a.size, b.size
    u = u_statistic(a, b)
    pooled = np.concatenate([a, b])
    _, tie_sizes = np.unique(pooled, return_counts=True)
    has_ties = bool(np.any(tie_sizes > 1))
    if m * n <= EXACT_MAX_PAIRS and not has_ties:
        return TestResult(u, exact_p_value(u, m, n), "exact")

    N = m + n
    tie_term = float(np.sum(tie_sizes.astype(float) ** 3 - tie_sizes))
    var = m * n / 12.0 * ((N + 1) - tie_term / (N * (N - 1)))
    if var <= 0:
        return TestResult(u, 1.0, "normal_approx")
    z = max(abs(u - m * n / 2.0) - 0.5, 0.0) / math.sqrt(var)
    return TestResult(u, min(1.0, 2.0 * _norm_sf(z)), "normal_approx")


def holm_correct(p_values) -> list[float]:
    """Holm step-down adjusted p-values, returned in input order."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return []
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    adj = np.minimum(1.0, (m - np.arange(m)) * p[order])
    adj = np.maximum.accumulate(adj)
    out = np.empty(m)
    out[order] = adj
    return out.tolist()


def cliffs_delta(a, b) -> float:
    a, b = _nonempty(a, b)
    gt, lt, _ = _pair_counts(a, b)
    return (gt - lt) / (a.size * b.size)


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size or x.size < 2:
        raise ValueError("need two equal-length samples of size >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if np.all(x == x[0]) or np.all(y == y[0]) or sxx == 0 or syy == 0:
        raise ValueError("undefined correlation")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def binary_metrics(predicted, truth, positive="anomalous") -> dict:
    """Accuracy, precision, recall and F1 with ``positive`` as the positive class."""
    pred = np.asarray(predicted) == positive
    true = np.asarray(truth) == positive
    if pred.shape != true.shape or pred.size == 0:
        raise ValueError("need two equal-length, non-empty label sequences")
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    tn = int(np.sum(~pred & ~true))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "accuracy": (tp + tn) / pred.size,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "tp": tp,
        "fp": fp,
        "fn": fn,
        "tn": tn,
    }


def mae(y_true, y_pred) -> float:
    a, b = _nonempty(y_true, y_pred)
    if a.size != b.size:
        raise ValueError("length mismatch")
    return float(np.mean(np.abs(a - b)))


def _corr_or_undefined(x, y):
    try:
        return pearson_r(x, y)
    except ValueError:
        return "undefined"


def evaluate_report(report) -> dict:
    """Score-vs-change correlation, rank tests per change level, detection
    and regression metrics for an ``AnomalyReport``.

    Each nonzero delta-L level is tested against delta-L = 0 with a two-sided
    Mann-Whitney U test; p-values are Holm-corrected across levels. Cliff's
    delta is reported as (unchanged vs changed), so positive values mean the
    unchanged windows score higher.
    """
    if len(report) == 0:
        raise ValueError("empty report")
    scores = report.column("anomaly_score").astype(float)
    dl = report.column("delta_l_m").astype(float)
    labels = report.column("label")
    truth = np.where(dl != 0, "anomalous", "normal")
    L_true = report.column("exposure_length_m").astype(float)
    L_est = report.column("predicted_length_m").astype(float)

    base = scores[dl == 0]
    levels = sorted(set(dl[dl != 0].tolist()))
    tests = []
    for level in levels:
        other = scores[dl == level]
        if base.size == 0:
            tests.append({"delta_l_m": level, "n": int(other.size), "u": None, "p_value": None, "method": None})
            continue
        res = mann_whitney_u(base, other)
        tests.append(
            {
                "delta_l_m": level,
                "n_baseline": int(base.size),
                "n": int(other.size),
                "u": res.statistic,
                "p_value": res.p_value,
                "method": res.method,
            }
        )
    raw = [t["p_value"] for t in tests if t["p_value"] is not None]
    adjusted = iter(holm_correct(raw))
    for t in tests:
        t["p_holm"] = next(adjusted) if t["p_value"] is not None else None

    effects = [
        {"delta_l_m": level, "cliffs_delta": cliffs_delta(base, scores[dl == level]) if base.size else None}
        for level in levels
    ]
    return {
        "n_windows": int(scores.size),
        "correlation": {"abs_delta_l_vs_score_r": _corr_or_undefined(np.abs(dl), scores)},
        "mann_whitney": tests,
        "cliffs_delta": effects,
        "classification": binary_metrics(labels, truth),
        "regression": {
            "r": _corr_or_undefined(L_true, L_est),
            "mae_m": mae(L_true, L_est),
        },
        "summary": report.summary(),
    }
