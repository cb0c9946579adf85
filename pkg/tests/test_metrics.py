import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prostmri.errors import ContractError, UndefinedMetricError
from prostmri.metrics import (ConfusionMatrix, Fixed, MetricSet, SensitivityFloor, aggregate, auc,
                              auc_trapezoid, candidate_thresholds, confusion, select_threshold,
                              summarize)

from oracles import brute_candidates, pair_auc, sens_spec


def test_confusion_examples():
    assert confusion([1.0] * 4, [1] * 4, 0.5) == ConfusionMatrix(0, 0, 0, 4)
    assert confusion([0.6, 0.4], [0, 1], 0.5) == ConfusionMatrix(0, 1, 1, 0)
    assert confusion([0.5], [1], 0.5).tp == 1   # ties go positive
    with pytest.raises(ContractError):
        confusion([0.1, 0.2], [1], 0.5)


def test_confusion_str_and_parse():
    cm = ConfusionMatrix(10, 2, 1, 20)
    assert str(cm) == "10 / 2 / 1 / 20"
    assert ConfusionMatrix.parse("10/2/1/20") == cm and cm.total == 33


def test_summarize_examples():
    m = summarize(ConfusionMatrix(10, 2, 1, 20))
    assert (round(m.accuracy, 3), round(m.sensitivity, 3), round(m.specificity, 3), round(m.f1, 3)) \
        == (0.909, 0.952, 0.833, 0.930)
    empty = summarize(ConfusionMatrix(0, 0, 0, 0))
    assert all(v is None for v in empty.to_dict().values())


def test_auc_examples():
    assert auc([1, 1, 0, 0], [1, 1, 0, 0]) == 1.0
    assert auc([0.3] * 5, [1, 0, 1, 0, 0]) == 0.5
    assert auc([0.9, 0.4, 0.6, 0.1], [1, 1, 0, 0]) == 0.75
    with pytest.raises(UndefinedMetricError):
        auc([0.1, 0.2], [1, 1])


def _random_set(g):
    n = int(g.integers(2, 51))
    labels = g.integers(0, 2, n)
    labels[0], labels[1] = 0, 1
    scores = np.round(g.random(n) * g.choice([3, 10, 1000]), 0) / 10   # force some ties
    return scores, labels


def test_auc_equivalence_200_sets():
    g = np.random.default_rng(0)
    for _ in range(200):
        s, y = _random_set(g)
        a = auc(s, y)
        assert abs(a - auc_trapezoid(s, y)) <= 1e-12
        assert abs(a - float(pair_auc(s.tolist(), y.tolist()))) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-1000, 1000), st.integers(0, 1)), min_size=2, max_size=40))
def test_auc_rank_invariance(pairs):
    # integer scores keep the transforms strictly increasing in floating point
    s = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs])
    if y.min() == y.max():
        return
    a = auc(s, y)
    for f in (lambda v: 3 * v + 7, lambda v: v ** 3, lambda v: np.exp(v / 50), np.arctan):
        assert auc(f(s), y) == a


def test_candidates_and_floor_example():
    s = [0.9, 0.8, 0.3, 0.6, 0.2, 0.1]
    y = [1, 1, 1, 0, 0, 0]
    cands = candidate_thresholds(s)
    assert len(cands) == 7
    np.testing.assert_allclose(cands, brute_candidates(s), atol=1e-15)
    t = select_threshold(s, y, SensitivityFloor(1.0))
    assert t < 0.3
    assert sens_spec(s, y, t) == (1, Fraction(2, 3))


def test_candidates_adjacent_floats():
    a = 0.5
    b = np.nextafter(a, 1.0)
    c = candidate_thresholds([a, b])
    assert confusion([a, b], [0, 1], c[1]) == ConfusionMatrix(1, 0, 0, 1)


def test_floor_separated_and_21_positive_cases():
    s = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9]
    y = [0, 0, 0, 1, 1, 1]
    t = select_threshold(s, y, SensitivityFloor())
    assert 0.3 < t < 0.7 and sens_spec(s, y, t) == (1, 1)
    g = np.random.default_rng(3)
    s = np.r_[g.normal(1, 1, 21), g.normal(-1, 1, 12)]
    y = np.r_[np.ones(21, int), np.zeros(12, int)]
    cm = confusion(s, y, select_threshold(s, y, SensitivityFloor(0.95)))
    assert cm.fn <= 1 and cm.tp >= math.ceil(0.95 * 21)


def test_fixed_passthrough_and_defaults():
    assert select_threshold([0.1], [1], Fixed(0.37)) == 0.37
    assert Fixed().t == 0.5 and SensitivityFloor().s_min == 0.95
    with pytest.raises(ValueError):
        SensitivityFloor(0.0)
    with pytest.raises(UndefinedMetricError):
        select_threshold([0.1, 0.2], [0, 0], SensitivityFloor())


def brute_floor(scores, labels, s_min):
    best = None
    for t in brute_candidates(scores):
        sens, spec = sens_spec(scores, labels, t)
        if sens >= s_min and (best is None or spec >= best[1]):
            best = (t, spec)
    return best


def test_floor_matches_exhaustive_500_sets():
    g = np.random.default_rng(1)
    for _ in range(500):
        s, y = _random_set(g)
        t = select_threshold(s, y, SensitivityFloor(0.95))
        sens, spec = sens_spec(s.tolist(), y.tolist(), t)
        assert sens >= Fraction(95, 100)
        assert spec == brute_floor(s.tolist(), y.tolist(), Fraction(95, 100))[1]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-10, 10), st.integers(0, 1)), min_size=1, max_size=30),
       st.floats(0.01, 1.0))
def test_floor_always_met(pairs, s_min):
    s = [p[0] for p in pairs]
    y = [p[1] for p in pairs]
    if 1 not in y:
        return
    t = select_threshold(s, y, SensitivityFloor(s_min))
    assert sens_spec(s, y, t)[0] >= s_min


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=2, max_size=30),
       st.floats(0, 1), st.floats(0, 1))
def test_lower_threshold_monotone(pairs, t1, t2):
    s = [p[0] for p in pairs]
    y = [p[1] for p in pairs]
    lo, hi = sorted((t1, t2))
    a, b = summarize(confusion(s, y, lo)), summarize(confusion(s, y, hi))
    if a.sensitivity is not None:
        assert a.sensitivity >= b.sensitivity
    if a.specificity is not None:
        assert a.specificity <= b.specificity


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_summarize_rational(tn, fp, fn, tp):
    cm = ConfusionMatrix(tn, fp, fn, tp)
    m = summarize(cm, exact=True)
    if cm.total:
        assert m.accuracy * cm.total == tp + tn
    else:
        assert m.accuracy is None
    assert (m.sensitivity is None) == (tp + fn == 0)
    assert (m.ppv is None) == (tp + fp == 0)


def test_aggregate_examples():
    acc = [0.909, 0.909, 0.818, 0.818, 0.879, 0.818]
    agg = aggregate([{"accuracy": a} for a in acc], ["accuracy"])
    assert (round(agg["accuracy"].mean, 3), round(agg["accuracy"].sd, 3)) == (0.858, 0.046)
    same = aggregate([MetricSet(0.5, 0.5, 0.5, 0.5, 0.5, 0.5)] * 3, ["accuracy"])
    assert same["accuracy"].sd == 0.0
    with pytest.raises(ValueError):
        aggregate([{"accuracy": 0.5}], ["accuracy"])
    partial = aggregate([{"auc": None}, {"auc": 0.7}], ["auc"])
    assert partial["auc"].mean == 0.7 and partial["auc"].sd is None
