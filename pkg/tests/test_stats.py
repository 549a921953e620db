import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from freespan.dasio import AnomalyReport, ReportRow
from freespan.stats import (
    binary_metrics,
    cliffs_delta,
    evaluate_report,
    exact_p_value,
    holm_correct,
    mae,
    mann_whitney_u,
    pearson_r,
    u_distribution,
    u_statistic,
)
from oracles import cliffs_delta_pairs, holm_by_definition, two_sided_p_from_counts, u_null_by_enumeration


def test_mw_examples():
    res = mann_whitney_u([1, 2], [3, 4])
    assert res.statistic == 0
    assert res.p_value == pytest.approx(2 / 6)
    assert res.method == "exact"
    assert u_statistic([1, 3], [2, 4]) == 1


def test_u_distribution_matches_enumeration_small():
    for m in range(1, 7):
        for n in range(1, 7):
            if m * n <= 36:
                assert list(u_distribution(m, n)) == u_null_by_enumeration(m, n)


def test_exact_p_matches_scipy_exact(rng):
    for m, n in [(3, 4), (5, 5), (8, 8), (4, 10)]:
        a, b = rng.standard_normal(m), rng.standard_normal(n) + 0.5
        ours = mann_whitney_u(a, b)
        ref = scipy.stats.mannwhitneyu(a, b, alternative="two-sided", method="exact")
        assert ours.statistic == ref.statistic
        assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-12)


def test_normal_approximation_matches_scipy_with_ties(rng):
    a = rng.integers(0, 10, 40).astype(float)
    b = rng.integers(2, 12, 35).astype(float)
    ours = mann_whitney_u(a, b)
    ref = scipy.stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
    assert ours.method == "normal_approx"
    assert ours.statistic == ref.statistic
    assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-10)


def test_exact_and_normal_agree_at_eight_by_eight(rng):
    for _ in range(20):
        a, b = rng.standard_normal(8), rng.standard_normal(8) + rng.uniform(0, 2)
        exact = mann_whitney_u(a, b)
        approx = scipy.stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic").pvalue
        assert abs(exact.p_value - approx) < 0.02


def test_mw_empty_sample():
    with pytest.raises(ValueError, match="empty sample"):
        mann_whitney_u([], [1.0])


def test_holm_examples():
    assert holm_correct([0.01, 0.04, 0.03]) == pytest.approx([0.03, 0.06, 0.06])
    assert holm_correct([0.2]) == [0.2]
    assert holm_correct([0.5, 0.9]) == [1.0, 1.0]
    assert holm_correct([]) == []


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=12))
def test_holm_properties(p):
    adj = holm_correct(p)
    assert adj == pytest.approx(holm_by_definition(p), abs=1e-15)
    assert all(x >= y for x, y in zip(adj, p))
    order = np.argsort(p, kind="stable")
    sorted_adj = [adj[i] for i in order]
    assert sorted_adj == sorted(sorted_adj)


def test_cliffs_examples():
    assert cliffs_delta([1, 2], [3, 4]) == -1
    assert cliffs_delta([5], [5]) == 0
    assert cliffs_delta([2, 4], [1, 3]) == 0.5


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(-5, 5), min_size=1, max_size=15),
    st.lists(st.integers(-5, 5), min_size=1, max_size=15),
)
def test_cliffs_matches_pairs_and_is_antisymmetric(a, b):
    d = cliffs_delta(a, b)
    assert Fraction(d).limit_denominator(len(a) * len(b)) == Fraction(
        sum((x > y) - (x < y) for x in a for y in b), len(a) * len(b)
    )
    assert d == cliffs_delta_pairs(a, b)
    assert cliffs_delta(b, a) == -d


def test_pearson_examples():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert pearson_r(x, x) == pytest.approx(1.0)
    assert pearson_r(x, -2 * x + 3) == pytest.approx(-1.0)
    assert round(pearson_r([1, 2, 3], [1, 2, 4]), 4) == 0.982
    # hand sums: Sxy = 3, Sxx = 2, Syy = 14/3
    assert pearson_r([1, 2, 3], [1, 2, 4]) == pytest.approx(3 / math.sqrt(2 * 14 / 3), abs=1e-14)
    with pytest.raises(ValueError, match="undefined correlation"):
        pearson_r([1, 1, 1], [1, 2, 3])


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    scale=st.floats(0.01, 100),
    shift=st.floats(-100, 100),
)
def test_pearson_affine_invariance(seed, scale, shift):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(20), rng.standard_normal(20)
    r = pearson_r(x, y)
    assert r == pytest.approx(scipy.stats.pearsonr(x, y)[0], abs=1e-12)
    assert abs(pearson_r(scale * x + shift, y) - r) < 1e-12
    assert abs(pearson_r(x, scale * y + shift) - r) < 1e-12


def test_binary_metrics_examples():
    perfect = binary_metrics(["anomalous", "normal"], ["anomalous", "normal"])
    assert [perfect[k] for k in ("accuracy", "precision", "recall", "f1")] == [1, 1, 1, 1]
    m = binary_metrics(
        ["anomalous", "anomalous", "anomalous", "normal"],
        ["anomalous", "anomalous", "normal", "normal"],
    )
    assert (m["tp"], m["fp"], m["fn"], m["tn"]) == (2, 1, 0, 1)
    assert m["precision"] == pytest.approx(2 / 3)
    assert m["recall"] == 1 and m["accuracy"] == 0.75
    assert m["f1"] == pytest.approx(0.8)
    none = binary_metrics(["normal"] * 3, ["anomalous", "normal", "anomalous"])
    assert none["recall"] == 0 and none["f1"] == 0


def test_mae_examples():
    assert mae([1, 2, 3], [1, 2, 3]) == 0
    assert mae([2, 4], [3, 3]) == 1.0
    with pytest.raises(ValueError):
        mae([], [])


def _row(tid, score, dl, L, est):
    return ReportRow(tid, "S1", 0, score, "anomalous" if score < 0 else "normal", dl, L, est)


def test_evaluate_hand_built_report():
    rep = AnomalyReport(
        [
            _row("a", 0.2, 0.0, 6.0, 6.5),
            _row("b", -0.1, 0.0, 6.0, 5.0),
            _row("c", -0.3, 2.0, 8.0, 7.0),
            _row("d", -0.5, -2.0, 4.0, 4.5),
        ]
    )
    ev = evaluate_report(rep)
    assert set(ev) >= {"correlation", "mann_whitney", "cliffs_delta", "classification", "regression", "summary"}
    # |dL| = [0,0,2,2] against the scores: Sxy = -0.9, Sxx = 4, Syy = 0.2675
    assert ev["correlation"]["abs_delta_l_vs_score_r"] == pytest.approx(-0.9 / math.sqrt(4 * 0.2675))
    c = ev["classification"]
    assert (c["tp"], c["fp"], c["fn"], c["tn"]) == (2, 1, 0, 1)
    assert c["f1"] == pytest.approx(0.8)
    # estimates: Sxy = 5, Sxx = 8, Syy = 4.25
    assert ev["regression"]["r"] == pytest.approx(5 / math.sqrt(34))
    assert ev["regression"]["mae_m"] == pytest.approx(0.75)
    # each level: both baseline windows beat the single changed window
    for t in ev["mann_whitney"]:
        assert t["u"] == 2 and t["p_value"] == pytest.approx(2 / 3) and t["p_holm"] == 1.0
    assert [e["cliffs_delta"] for e in ev["cliffs_delta"]] == [1.0, 1.0]


def test_evaluate_only_unchanged_rows_marks_correlation_undefined():
    rep = AnomalyReport([_row("a", 0.2, 0.0, 6.0, 6.1), _row("b", -0.1, 0.0, 6.0, 5.9)])
    ev = evaluate_report(rep)
    assert ev["correlation"]["abs_delta_l_vs_score_r"] == "undefined"
    assert ev["regression"]["r"] == "undefined"
    assert ev["mann_whitney"] == []


def test_evaluate_empty_report():
    with pytest.raises(ValueError, match="empty report"):
        evaluate_report(AnomalyReport())


def test_exact_p_value_is_symmetric():
    for u in range(0, 13):
        assert exact_p_value(u, 3, 4) == pytest.approx(exact_p_value(12 - u, 3, 4))
        assert exact_p_value(u, 3, 4) == pytest.approx(two_sided_p_from_counts(u_null_by_enumeration(3, 4), u))
