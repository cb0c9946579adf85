"""Confusion matrices, clinical metrics, rank AUC and operating-point selection."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ContractError, UndefinedMetricError

METRIC_NAMES = ("accuracy", "auc", "sensitivity", "specificity", "ppv", "npv", "f1")


@dataclass(frozen=True)
class ConfusionMatrix:
    tn: int
    fp: int
    fn: int
    tp: int

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    def __str__(self) -> str:
        return f"{self.tn} / {self.fp} / {self.fn} / {self.tp}"

    @classmethod
    def parse(cls, text: str) -> "ConfusionMatrix":
        parts = [int(p) for p in text.split("/")]
        if len(parts) != 4:
            raise ValueError(f"expected 'TN / FP / FN / TP', got {text!r}")
        return cls(*parts)


@dataclass(frozen=True)
class MetricSet:
    """Undefined metrics (zero denominators) are ``None``."""

    accuracy: Optional[float] = None
    sensitivity: Optional[float] = None
    specificity: Optional[float] = None
    ppv: Optional[float] = None
    npv: Optional[float] = None
    f1: Optional[float] = None
    auc: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def with_auc(self, value: Optional[float]) -> "MetricSet":
        return MetricSet(**{**asdict(self), "auc": value})


def confusion(scores, labels, threshold: float) -> ConfusionMatrix:
    """Positive iff ``score >= threshold``."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ContractError(f"scores and labels must be 1-D of equal length ({s.shape} vs {y.shape})")
    pred = s >= threshold
    pos = y == 1
    return ConfusionMatrix(tn=int(np.sum(~pred & ~pos)), fp=int(np.sum(pred & ~pos)),
                           fn=int(np.sum(~pred & pos)), tp=int(np.sum(pred & pos)))


def _ratio(num: int, den: int, exact: bool):
    if den == 0:
        return None
    return Fraction(num, den) if exact else num / den


def summarize(cm: ConfusionMatrix, exact: bool = False) -> MetricSet:
    """Threshold metrics from counts; ``exact=True`` returns Fractions."""
    n = cm.total
    return MetricSet(
        accuracy=_ratio(cm.tp + cm.tn, n, exact),
        sensitivity=_ratio(cm.tp, cm.tp + cm.fn, exact),
        specificity=_ratio(cm.tn, cm.tn + cm.fp, exact),
        ppv=_ratio(cm.tp, cm.tp + cm.fp, exact),
        npv=_ratio(cm.tn, cm.tn + cm.fn, exact),
        f1=_ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn, exact),
    )


def _check_binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ContractError("scores and labels must be 1-D of equal length")
    n_pos = int(np.sum(y == 1))
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative sample")
    return s, y == 1, n_pos, n_neg


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) with ties counted 1/2."""
    s, pos, n_pos, n_neg = _check_binary(scores, labels)
    order = np.argsort(s, kind="mergesort")
    ranked = s[order]
    # mid-ranks of tied runs (1-based)
    _, first, counts = np.unique(ranked, return_index=True, return_counts=True)
    mid = first + (counts + 1) / 2.0
    ranks = np.empty(len(s))
    ranks[order] = np.repeat(mid, counts)
    u = float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds) from (0, 0) to (1, 1); one point per distinct score."""
    s, pos, n_pos, n_neg = _check_binary(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, pos = s[order], pos[order]
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tp = np.r_[0, np.cumsum(pos)[last]]
    fp = np.r_[0, np.cumsum(~pos)[last]]
    thresholds = np.r_[np.inf, s[last]]
    return fp / n_neg, tp / n_pos, thresholds


def auc_trapezoid(scores, labels) -> float:
    """Trapezoidal area under the ROC curve, accumulated in integer counts."""
    s, pos, n_pos, n_neg = _check_binary(scores, labels)
    fpr, tpr, _ = roc_curve(scores, labels)
    fp = np.rint(fpr * n_neg).astype(np.int64)
    tp = np.rint(tpr * n_pos).astype(np.int64)
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return twice_area / (2.0 * n_pos * n_neg)


# -- threshold policies -------------------------------------------------------

@dataclass(frozen=True)
class Fixed:
    t: float = 0.5


@dataclass(frozen=True)
class SensitivityFloor:
    s_min: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.s_min <= 1.0:
            raise ValueError(f"s_min must lie in (0, 1], got {self.s_min}")


ThresholdPolicy = Union[Fixed, SensitivityFloor]


def candidate_thresholds(scores) -> np.ndarray:
    """Ascending: below-min sentinel, midpoints of adjacent distinct scores, above-max sentinel.

    Candidate ``c`` (0-based) classifies exactly the distinct scores with
    index ``>= c`` as positive.
    """
    u = np.unique(np.asarray(scores, dtype=np.float64))
    mids = u[:-1] + (u[1:] - u[:-1]) / 2.0
    # adjacent floats: keep "s > a" semantics by snapping to the upper value
    mids = np.where(mids > u[:-1], mids, u[1:])
    return np.r_[u[0] - 1.0, mids, u[-1] + 1.0]


def operating_points(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(thresholds, sensitivity, specificity) at every candidate threshold."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels) == 1
    u, inv = np.unique(s, return_inverse=True)
    m = len(u)
    pos_at = np.bincount(inv, weights=y, minlength=m)
    neg_at = np.bincount(inv, weights=~y, minlength=m)
    # positives predicted at candidate c: scores with distinct index >= c
    tp = np.r_[np.cumsum(pos_at[::-1])[::-1], 0.0]
    fp = np.r_[np.cumsum(neg_at[::-1])[::-1], 0.0]
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    sens = tp / n_pos if n_pos else np.full(m + 1, np.nan)
    spec = (n_neg - fp) / n_neg if n_neg else np.full(m + 1, np.nan)
    return candidate_thresholds(s), sens, spec


def select_threshold(scores, labels, policy: ThresholdPolicy) -> float:
    """Fixed policies pass through. A sensitivity floor picks the candidate
    with the highest specificity among those meeting the floor, preferring
    the larger threshold on ties."""
    if isinstance(policy, Fixed):
        return float(policy.t)
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1 or len(s) == 0:
        raise ContractError("scores and labels must be non-empty 1-D of equal length")
    if not np.any(y == 1):
        raise UndefinedMetricError("sensitivity floor needs at least one positive validation sample")
    thr, sens, spec = operating_points(s, y)
    ok = sens >= policy.s_min
    # unreachable: the below-min sentinel always gives sensitivity 1
    assert ok.any()
    spec = np.nan_to_num(spec, nan=0.0)
    best = np.max(spec[ok])
    idx = np.nonzero(ok & (spec == best))[0]
    return float(thr[idx[-1]])


# -- aggregation ----------------------------------------------------------------

@dataclass(frozen=True)
class Summary:
    mean: Optional[float]
    sd: Optional[float]
    n: int


def aggregate(rows: Sequence, metrics: Sequence[str] = METRIC_NAMES) -> dict[str, Summary]:
    """Mean and sample SD (n - 1) per metric, skipping undefined entries."""
    if len(rows) < 2:
        raise ValueError("aggregate needs at least two rows")
    out = {}
    for name in metrics:
        vals = []
        for r in rows:
            v = r.get(name) if isinstance(r, dict) else getattr(r, name)
            if v is not None and not (isinstance(v, float) and math.isnan(v)):
                vals.append(float(v))
        mean = sum(vals) / len(vals) if vals else None
        sd = None
        if len(vals) >= 2:
            sd = math.sqrt(sum((v - mean) ** 2 for v in vals) / (len(vals) - 1))
        out[name] = Summary(mean, sd, len(vals))
    return out
