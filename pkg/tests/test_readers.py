import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prostmri.errors import SchemaError, UndefinedMetricError
from prostmri.metrics import ConfusionMatrix
from prostmri.readers import (ReaderStudy, category_counts, fleiss_kappa, kappa_from_counts,
                              kappa_null_se, load_ratings, reader_metrics)

from conftest import READER_COUNTS, reader_study_csv
from oracles import fleiss_direct


def _study(ratings, truth=None):
    ratings = np.asarray(ratings, dtype=np.int64)
    n, m = ratings.shape
    truth = np.zeros(n, dtype=int) if truth is None else np.asarray(truth)
    return ReaderStudy(tuple(f"c{i}" for i in range(n)), truth, ratings,
                       tuple(f"r{j}" for j in range(m)))


def test_load_reader_study(tmp_path):
    rs = load_ratings(reader_study_csv(tmp_path / "r.csv"))
    assert (rs.n_cases, rs.n_truth_pos, rs.n_truth_neg, rs.n_readers) == (22, 8, 14, 5)


def test_reader_rows(tmp_path):
    table = reader_metrics(load_ratings(reader_study_csv(tmp_path / "r.csv")))
    cms = {rid: cm for rid, cm, _ in table.readers}
    for rid, (tp, fn, tn, fp) in READER_COUNTS.items():
        assert cms[rid] == ConfusionMatrix(tn, fp, fn, tp)
    ms = {rid: m for rid, _, m in table.readers}
    r1 = [round(100 * v, 1) for v in (ms["Rad1"].sensitivity, ms["Rad1"].specificity,
                                      ms["Rad1"].ppv, ms["Rad1"].npv, ms["Rad1"].accuracy)]
    assert r1 == [50.0, 100.0, 100.0, 77.8, 81.8]
    r4 = [round(100 * v, 1) for v in (ms["Rad4"].sensitivity, ms["Rad4"].specificity,
                                      ms["Rad4"].ppv, ms["Rad4"].npv, ms["Rad4"].accuracy)]
    assert r4 == [100.0, 64.3, 61.5, 100.0, 77.3]
    assert table.mean.sensitivity == pytest.approx(0.675, abs=1e-12)


@pytest.mark.parametrize("body,match", [
    ("case_id,truth,a,b\nc1,1,1,\nc2,0,0,0\n", r":2, column 'b': missing"),
    ("case_id,truth,a,b\nc1,1,1,2\nc2,0,0,0\n", r":2, column 'b': non-binary"),
    ("case_id,truth,a,b\nc1,1,1,1\nc1,0,0,0\n", r":3: duplicate case_id"),
    ("case_id,truth,a\nc1,1,1\nc2,0,0\n", r"M >= 2 required"),
])
def test_load_errors(tmp_path, body, match):
    (tmp_path / "r.csv").write_text(body)
    with pytest.raises(SchemaError, match=match):
        load_ratings(tmp_path / "r.csv")


def test_perfect_agreement():
    col = np.array([1, 0, 1, 1, 0, 0])
    r = fleiss_kappa(_study(np.repeat(col[:, None], 5, axis=1)), n_bootstrap=200)
    assert r.kappa == 1.0


def test_hand_example():
    counts = [3, 0, 2, 1]
    ratings = np.array([[1] * k + [0] * (3 - k) for k in counts])
    k = kappa_from_counts(category_counts(ratings))
    # P_i = 1, 1, 1/3, 1/3 -> P_bar = 2/3; p_pos = 1/2 -> P_e = 1/2; kappa = 1/3
    assert abs(k - 1 / 3) <= 1e-12
    assert abs(k - float(fleiss_direct(counts, 3))) <= 1e-12


def test_uniform_null():
    g = np.random.default_rng(0)
    ratings = g.integers(0, 2, size=(1000, 5))
    assert abs(kappa_from_counts(category_counts(ratings))) <= 0.05


def test_null_se_matches_monte_carlo():
    g = np.random.default_rng(1)
    n, m, p = 200, 5, 0.3
    ks = [kappa_from_counts(category_counts((g.random((n, m)) < p).astype(int))) for _ in range(3000)]
    se = kappa_null_se(category_counts((g.random((n, m)) < p).astype(int)))
    assert np.std(ks, ddof=1) == pytest.approx(se, rel=0.08)


def test_undefined_kappa():
    with pytest.raises(UndefinedMetricError):
        fleiss_kappa(_study(np.ones((4, 3))), n_bootstrap=10)


def test_bootstrap_ci_properties(tmp_path):
    rs = load_ratings(reader_study_csv(tmp_path / "r.csv"))
    a = fleiss_kappa(rs, n_bootstrap=2000, seed=3)
    b = fleiss_kappa(rs, n_bootstrap=2000, seed=3)
    assert a == b
    assert a.ci_lo - 0.02 <= a.kappa <= a.ci_hi + 0.02
    assert 0 < a.p <= 1


def test_truth_reader_is_perfect():
    truth = np.array([1, 0, 1, 0, 1])
    ratings = np.stack([truth, 1 - truth], axis=1)
    ms = reader_metrics(_study(ratings, truth)).readers[0][2]
    assert all(getattr(ms, k) == 1 for k in ("sensitivity", "specificity", "ppv", "npv", "accuracy"))


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 30), st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_kappa_relabel_invariant(n, m, seed):
    ratings = np.random.default_rng(seed).integers(0, 2, size=(n, m))
    try:
        k = kappa_from_counts(category_counts(ratings))
    except UndefinedMetricError:
        return
    assert kappa_from_counts(category_counts(1 - ratings)) == pytest.approx(k, abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 30), st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_kappa_one_iff_unanimous(n, m, seed):
    g = np.random.default_rng(seed)
    ratings = g.integers(0, 2, size=(n, m))
    if g.random() < 0.5:
        ratings = np.repeat(ratings[:, :1], m, axis=1)
    counts = category_counts(ratings)
    if counts[:, 1].sum() in (0, n * m):
        return
    unanimous = bool(np.all((counts == 0).any(axis=1)))
    assert (kappa_from_counts(counts) == pytest.approx(1.0, abs=1e-12)) == unanimous
