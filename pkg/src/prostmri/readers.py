"""Reader-study ingestion, per-reader diagnostics and Fleiss' kappa."""

from __future__ import annotations

import csv
import math
import sys
from dataclasses import dataclass

import numpy as np

from .errors import SchemaError, UndefinedMetricError
from .metrics import ConfusionMatrix, MetricSet, confusion, summarize
from .rng import SplitMix64

READER_METRICS = ("sensitivity", "specificity", "ppv", "npv", "accuracy")


@dataclass(frozen=True)
class ReaderStudy:
    case_ids: tuple[str, ...]
    truth: np.ndarray      # (N,) in {0, 1}
    ratings: np.ndarray    # (N, M) in {0, 1}
    reader_ids: tuple[str, ...]

    def __post_init__(self):
        n, m = self.ratings.shape
        if n < 2:
            raise SchemaError(f"a reader study needs N >= 2 cases, got {n}")
        if m < 2:
            raise SchemaError(f"M >= 2 required (got {m} reader)")
        if len(self.case_ids) != n or len(self.truth) != n or len(self.reader_ids) != m:
            raise SchemaError("case ids, truth and ratings disagree in shape")
        if not (np.isin(self.ratings, (0, 1)).all() and np.isin(self.truth, (0, 1)).all()):
            raise SchemaError("ratings and truth must be binary")

    @property
    def n_cases(self) -> int:
        return self.ratings.shape[0]

    @property
    def n_readers(self) -> int:
        return self.ratings.shape[1]

    @property
    def n_truth_pos(self) -> int:
        return int(self.truth.sum())

    @property
    def n_truth_neg(self) -> int:
        return self.n_cases - self.n_truth_pos


def _binary(cell: str, where: str) -> int:
    c = cell.strip()
    if c == "":
        raise SchemaError(f"{where}: missing value")
    if c not in ("0", "1"):
        raise SchemaError(f"{where}: non-binary value {c!r}")
    return int(c)


def load_ratings(path) -> ReaderStudy:
    """Parse ``case_id,truth,<reader>...``; errors carry row and column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "case_id" or header[1] != "truth":
        raise SchemaError(f"{path}:1: header must start with 'case_id,truth'")
    readers = header[2:]
    if len(readers) < 2:
        raise SchemaError(f"{path}:1: M >= 2 required (found {len(readers)} reader column)")
    if len(set(readers)) != len(readers):
        raise SchemaError(f"{path}:1: duplicate reader id")
    case_ids, truth, ratings, seen = [], [], [], set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        cid = row[0].strip()
        if not cid:
            raise SchemaError(f"{path}:{lineno}: empty case_id")
        if cid in seen:
            raise SchemaError(f"{path}:{lineno}: duplicate case_id {cid!r}")
        seen.add(cid)
        case_ids.append(cid)
        truth.append(_binary(row[1], f"{path}:{lineno}, column 'truth'"))
        ratings.append([_binary(c, f"{path}:{lineno}, column {readers[j]!r}")
                        for j, c in enumerate(row[2:])])
    if not ratings:
        raise SchemaError(f"{path}: no cases")
    return ReaderStudy(tuple(case_ids), np.array(truth), np.array(ratings, dtype=np.int64),
                       tuple(readers))


@dataclass(frozen=True)
class ReaderTable:
    readers: tuple[tuple[str, ConfusionMatrix, MetricSet], ...]
    mean: MetricSet


def reader_metrics(rs: ReaderStudy) -> ReaderTable:
    rows = []
    for j, rid in enumerate(rs.reader_ids):
        cm = confusion(rs.ratings[:, j].astype(float), rs.truth, 0.5)
        rows.append((rid, cm, summarize(cm)))
    means = {}
    for name in READER_METRICS:
        vals = [getattr(ms, name) for _, _, ms in rows if getattr(ms, name) is not None]
        means[name] = sum(vals) / len(vals) if vals else None
    return ReaderTable(tuple(rows), MetricSet(**means))


def ai_vs_readers(ai: MetricSet, table: ReaderTable) -> list[tuple[str, float | None, float | None]]:
    """(metric, AI value, mean reader value) rows; descriptive only."""
    return [(name, getattr(ai, name), getattr(table.mean, name)) for name in READER_METRICS]


# -- Fleiss' kappa -------------------------------------------------------------

@dataclass(frozen=True)
class KappaResult:
    kappa: float
    ci_lo: float
    ci_hi: float
    p: float
    se0: float
    n_bootstrap: int
    n_degenerate: int = 0   # resamples skipped because chance agreement was 1


def category_counts(ratings: np.ndarray) -> np.ndarray:
    """(N, 2) counts of raters choosing category 0 and 1 per case."""
    pos = ratings.sum(axis=1)
    return np.stack([ratings.shape[1] - pos, pos], axis=1)


def kappa_from_counts(counts: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    n_case, _ = counts.shape
    m = counts[0].sum()
    p_i = (np.sum(counts ** 2, axis=1) - m) / (m * (m - 1))
    p_bar = p_i.mean()
    p_j = counts.sum(axis=0) / (n_case * m)
    p_e = float(np.sum(p_j ** 2))
    if p_e >= 1.0:
        raise UndefinedMetricError("kappa undefined: every rating falls in one category")
    return float((p_bar - p_e) / (1.0 - p_e))


def kappa_null_se(counts: np.ndarray) -> float:
    """Large-sample SE of kappa under no agreement beyond chance (Fleiss, Nee & Landis 1979)."""
    counts = np.asarray(counts, dtype=np.float64)
    n_case = counts.shape[0]
    m = counts[0].sum()
    p = counts.sum(axis=0) / (n_case * m)
    q = 1.0 - p
    pq = float(np.sum(p * q))
    inner = pq ** 2 - float(np.sum(p * q * (q - p)))
    return math.sqrt(2.0) / (pq * math.sqrt(n_case * m * (m - 1))) * math.sqrt(inner)


def fleiss_kappa(rs: ReaderStudy, n_bootstrap: int = 10000, seed: int = 42) -> KappaResult:
    """Kappa, percentile-bootstrap 95% CI over cases, and a two-sided z-test p.

    Resample ``b`` draws its case indices from ``SplitMix64(seed).child(b)``.
    """
    counts = category_counts(rs.ratings)
    k = kappa_from_counts(counts)
    se0 = kappa_null_se(counts)
    z = k / se0
    p = max(math.erfc(abs(z) / math.sqrt(2.0)), sys.float_info.min)
    root = SplitMix64(seed)
    n = rs.n_cases
    boots, skipped = [], 0
    for b in range(n_bootstrap):
        idx = root.child(b).integers(n, size=n)
        try:
            boots.append(kappa_from_counts(counts[idx]))
        except UndefinedMetricError:
            skipped += 1
    if boots:
        lo, hi = np.percentile(boots, [2.5, 97.5])
    else:
        lo = hi = float("nan")
    return KappaResult(k, float(lo), float(hi), float(p), float(se0), n_bootstrap, skipped)
