"""L2-regularized linear SVM and logistic regression with Platt calibration.

Both trainers z-score features with training-split statistics and solve

    min_w,b  1/2 ||w||^2 + C * sum_i loss(y_i, w.z_i + b)

with an unregularized bias. The SVM is solved in the dual by pairwise
coordinate descent (SMO) on the linear Gram matrix; logistic regression by
full-batch gradient descent with a backtracking line search.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import CalibrationError, ContractError, DataError, SchemaError, TrainingError
from .rng import SplitMix64

MODEL_FORMAT = "prostmri.linear-model"
MODEL_VERSION = 1


def sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -np.asarray(x, dtype=np.float64)))


@dataclass(frozen=True)
class Calibration:
    """Platt sigmoid ``p = 1 / (1 + exp(A*s + B))``."""

    A: float
    B: float
    uninformative: bool = False

    def prob(self, scores):
        return sigmoid(-(self.A * np.asarray(scores, dtype=np.float64) + self.B))


@dataclass(frozen=True)
class LinearModel:
    kind: str                 # "svm" | "logreg"
    weights: np.ndarray       # in z-scored feature space
    bias: float
    mean: np.ndarray
    sd: np.ndarray            # 0 marks a constant (ignored) feature
    C: float
    seed: int = 42
    calibration: Optional[Calibration] = None
    source: Optional[str] = None          # "hog" | "embedding"
    hog_params: Optional[dict] = None
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.weights)

    def standardize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        safe = np.where(self.sd > 0, self.sd, 1.0)
        return np.where(self.sd > 0, (X - self.mean) / safe, 0.0)

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ContractError(f"feature dim {X.shape[1]} does not match model dim {self.dim}")
        return self.standardize(X) @ self.weights + self.bias

    def with_calibration(self, cal: Optional[Calibration]) -> "LinearModel":
        return replace(self, calibration=cal)

    def with_meta(self, **kw) -> "LinearModel":
        return replace(self, meta={**self.meta, **kw})


def predict_proba(model: LinearModel, X, calibration: Optional[Calibration] = None) -> np.ndarray:
    """Probabilities of the positive class.

    Logistic models use the sigmoid of their score unless a calibration is
    supplied. SVMs need a calibration; raw-score thresholding goes through
    :meth:`LinearModel.decision` instead.
    """
    cal = calibration if calibration is not None else model.calibration
    s = model.decision(X)
    if cal is not None:
        return cal.prob(s)
    if model.kind == "logreg":
        return sigmoid(s)
    raise ContractError("uncalibrated SVM does not produce probabilities; calibrate it or threshold scores")


# -- shared validation ---------------------------------------------------------

def _prepare(X, y, C):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise DataError(f"X must be (n, d) with n = len(y); got {X.shape} and {len(y)} labels")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature value in training data")
    if not set(np.unique(y)) <= {0, 1}:
        raise DataError("labels must be 0/1")
    if y.min() == y.max():
        raise TrainingError("training data contains a single class")
    if not C > 0:
        raise TrainingError(f"C must be positive, got {C}")
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 1e-12 * np.maximum(1.0, np.abs(mean)), sd, 0.0)
    safe = np.where(sd > 0, sd, 1.0)
    Z = np.where(sd > 0, (X - mean) / safe, 0.0)
    return Z, np.where(y == 1, 1.0, -1.0), mean, sd


# -- SVM -------------------------------------------------------------------------

def svm_objective(w, b, Z, ys, C) -> float:
    margins = ys * (Z @ w + b)
    return 0.5 * float(w @ w) + C * float(np.maximum(0.0, 1.0 - margins).sum())


def _smo_pair(alpha, G, Q, QD, ys, i, j, C):
    """Exact minimization over (alpha_i, alpha_j) keeping sum alpha*y fixed (LIBSVM rule)."""
    ai, aj = alpha[i], alpha[j]
    if ys[i] != ys[j]:
        quad = QD[i] + QD[j] + 2.0 * Q[i, j]
        quad = quad if quad > 0 else 1e-12
        delta = (-G[i] - G[j]) / quad
        diff = ai - aj
        ni, nj = ai + delta, aj + delta
        if diff > 0:
            if nj < 0:
                nj, ni = 0.0, diff
        elif ni < 0:
            ni, nj = 0.0, -diff
        if diff > 0:
            if ni > C:
                ni, nj = C, C - diff
        elif nj > C:
            nj, ni = C, C + diff
    else:
        quad = QD[i] + QD[j] - 2.0 * Q[i, j]
        quad = quad if quad > 0 else 1e-12
        delta = (G[i] - G[j]) / quad
        total = ai + aj
        ni, nj = ai - delta, aj + delta
        if total > C:
            if ni > C:
                ni, nj = C, total - C
        elif nj < 0:
            nj, ni = 0.0, total
        if total > C:
            if nj > C:
                nj, ni = C, total - C
        elif ni < 0:
            ni, nj = 0.0, total
    dai, daj = ni - ai, nj - aj
    if dai == 0 and daj == 0:
        return False
    alpha[i], alpha[j] = ni, nj
    G += Q[i] * dai + Q[j] * daj
    return True


def train_svm(X, y, C: float = 1.0, seed: int = 42, tol: float = 1e-6,
              max_epochs: int = 1000) -> LinearModel:
    """Hinge-loss SVM.

    Each epoch visits the samples in a seeded random order; a visited sample
    that violates the KKT conditions is paired with its maximal violating
    partner. Stops once the maximal violating pair gap is below ``tol``.
    """
    Z, ys, mean, sd = _prepare(X, y, C)
    n = len(ys)
    K = Z @ Z.T
    Q = K * np.outer(ys, ys)
    QD = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    rng = SplitMix64(seed)
    pos = ys > 0

    def sets():
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        return up, low

    converged = False
    for _ in range(max_epochs):
        for i in rng.permutation(n):
            up, low = sets()
            r = -ys * G
            if up[i]:
                cand = np.where(low, r, np.inf)
                j = int(np.argmin(cand))
                if r[i] - cand[j] > tol:
                    _smo_pair(alpha, G, Q, QD, ys, int(i), j, C)
                    continue
            if low[i]:
                cand = np.where(up, r, -np.inf)
                j = int(np.argmax(cand))
                if cand[j] - r[i] > tol:
                    _smo_pair(alpha, G, Q, QD, ys, j, int(i), C)
        up, low = sets()
        r = -ys * G
        gap = r[up].max(initial=-np.inf) - r[low].min(initial=np.inf)
        if gap < tol:
            converged = True
            break

    r = -ys * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        b = float(r[free].mean())
    else:
        up, low = sets()
        b = 0.5 * float(r[up].max(initial=-np.inf) + r[low].min(initial=np.inf))
        if not math.isfinite(b):
            b = 0.0
    w = Z.T @ (alpha * ys)
    if not (np.all(np.isfinite(w)) and math.isfinite(b)):
        raise TrainingError("SVM solver produced non-finite parameters")
    return LinearModel("svm", w, b, mean, sd, float(C), int(seed),
                       meta={"converged": converged, "n_support": int((alpha > 0).sum())})


# -- logistic regression ---------------------------------------------------------

def logreg_objective(w, b, Z, ys, C) -> float:
    m = ys * (Z @ w + b)
    return 0.5 * float(w @ w) + C * float(np.logaddexp(0.0, -m).sum())


def logreg_gradient(w, b, Z, ys, C) -> tuple[np.ndarray, float]:
    m = ys * (Z @ w + b)
    coef = -C * ys * sigmoid(-m)
    return w + Z.T @ coef, float(coef.sum())


def _descend(f, grad, inner, small, theta, step, max_iter, ftol):
    """Gradient descent with Armijo backtracking and Barzilai-Borwein trial steps.

    ``inner`` is the inner product in weight space, so the same loop serves
    the primal and the row-span parameterizations.
    """
    fx, g = f(theta), grad(theta)
    prev_theta = prev_g = None
    for _ in range(max_iter):
        gg = inner(g, g)
        if small(g, gg):
            return theta, True
        if prev_theta is not None:
            sv, yv = theta - prev_theta, g - prev_g
            sy = inner(sv, yv)
            if sy > 0:
                step = inner(sv, sv) / sy
        for _ in range(60):
            cand = theta - step * g
            fc = f(cand)
            if fc <= fx - 0.5 * step * gg:
                break
            step *= 0.5
        else:
            return theta, True  # no representable decrease left
        prev_theta, prev_g = theta, g
        theta, g = cand, grad(cand)
        decrease = fx - fc
        fx = fc
        if decrease < ftol * max(1.0, abs(fx)):
            return theta, True
    return theta, False


def train_logreg(X, y, C: float = 1.0, seed: int = 42, max_iter: int = 20000,
                 ftol: float = 1e-10, gtol: float = 1e-8) -> LinearModel:
    """Full-batch gradient descent from zero with Armijo backtracking.

    ``ftol`` is applied relative to ``max(1, |loss|)``. When features
    outnumber samples the iterates are tracked as ``w = Z.T @ beta`` (gradient
    steps never leave the row span), which is the same iteration at
    O(n^2) per step. Deterministic; ``seed`` is recorded only.
    """
    Z, ys, mean, sd = _prepare(X, y, C)
    n, d = Z.shape
    step0 = 1.0 / (1.0 + C * n * (1.0 + float(np.mean(np.sum(Z * Z, axis=1)))) / 4.0)

    if d <= n:
        def f(t):
            return logreg_objective(t[:d], t[d], Z, ys, C)

        def grad(t):
            gw, gb = logreg_gradient(t[:d], t[d], Z, ys, C)
            return np.append(gw, gb)

        def small(g, gg):
            return np.max(np.abs(g)) < gtol

        theta, converged = _descend(f, grad, lambda a, c: float(a @ c), small,
                                    np.zeros(d + 1), step0, max_iter, ftol)
        w, b = theta[:d].copy(), float(theta[d])
    else:
        K = Z @ Z.T

        def inner(a, c):
            return float(a[:n] @ (K @ c[:n])) + float(a[n] * c[n])

        def f(t):
            beta, b = t[:n], t[n]
            kb = K @ beta
            m = ys * (kb + b)
            return 0.5 * float(beta @ kb) + C * float(np.logaddexp(0.0, -m).sum())

        def grad(t):
            beta, b = t[:n], t[n]
            coef = -C * ys * sigmoid(-ys * (K @ beta + b))
            return np.append(beta + coef, coef.sum())

        def small(g, gg):
            if gg < gtol ** 2:
                return True
            if gg >= gtol ** 2 * (d + 1):
                return False
            return max(np.max(np.abs(Z.T @ g[:n])), abs(g[n])) < gtol

        theta, converged = _descend(f, grad, inner, small, np.zeros(n + 1), step0, max_iter, ftol)
        w, b = Z.T @ theta[:n], float(theta[n])
    if not (np.all(np.isfinite(w)) and math.isfinite(b)):
        raise TrainingError("logistic regression produced non-finite parameters")
    return LinearModel("logreg", w, b, mean, sd, float(C), int(seed), meta={"converged": converged})


def train(kind: str, X, y, C: float = 1.0, seed: int = 42) -> LinearModel:
    if kind == "svm":
        return train_svm(X, y, C, seed)
    if kind == "logreg":
        return train_logreg(X, y, C, seed)
    raise ValueError(f"unknown model kind {kind!r}")


# -- Platt calibration -------------------------------------------------------------

def _platt_nll(A, B, s, t):
    f = A * s + B
    # -log-likelihood of targets t under p = 1/(1+exp(f))
    return float(np.sum(t * f + np.logaddexp(0.0, -f)))


def fit_platt(scores, labels, max_iter: int = 100, min_step: float = 1e-10,
              sigma: float = 1e-12, eps: float = 1e-5) -> Calibration:
    """Newton's method with backtracking on Platt's smoothed targets
    (Lin, Lin & Weng's robust formulation)."""
    s = np.asarray(scores, dtype=np.float64)
    yl = np.asarray(labels)
    if len(s) != len(yl) or len(s) == 0:
        raise CalibrationError("scores and labels must be non-empty and of equal length")
    n_pos = int(np.sum(yl == 1))
    n_neg = len(yl) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise CalibrationError("calibration set must contain both classes")
    B0 = math.log((n_neg + 1.0) / (n_pos + 1.0))
    if s.max() == s.min():
        return Calibration(0.0, B0, uninformative=True)
    t = np.where(yl == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    A, B = 0.0, B0
    fval = _platt_nll(A, B, s, t)
    for _ in range(max_iter):
        p = sigmoid(-(A * s + B))
        q = 1.0 - p
        d2 = p * q
        h11 = sigma + float(np.sum(s * s * d2))
        h22 = sigma + float(np.sum(d2))
        h21 = float(np.sum(s * d2))
        d1 = t - p
        g1 = float(np.sum(s * d1))
        g2 = float(np.sum(d1))
        if abs(g1) < eps and abs(g2) < eps:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= min_step:
            nA, nB = A + step * dA, B + step * dB
            nf = _platt_nll(nA, nB, s, t)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2.0
        else:
            break
    return Calibration(float(A), float(B))


def calibrate(model: LinearModel, X_val, y_val) -> Calibration:
    return fit_platt(model.decision(X_val), y_val)


# -- persistence -------------------------------------------------------------------

def _floats(a) -> list:
    return [float(v) for v in np.asarray(a, dtype=np.float64)]


def model_to_dict(m: LinearModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": m.kind,
        "dim": m.dim,
        "weights": _floats(m.weights),
        "bias": float(m.bias),
        "mean": _floats(m.mean),
        "sd": _floats(m.sd),
        "C": float(m.C),
        "seed": int(m.seed),
        "calibration": None if m.calibration is None else {
            "A": m.calibration.A, "B": m.calibration.B,
            "uninformative": m.calibration.uninformative},
        "source": m.source,
        "hog_params": m.hog_params,
        "meta": m.meta,
    }


def model_from_dict(d: dict) -> LinearModel:
    if d.get("format") != MODEL_FORMAT:
        raise SchemaError(f"not a {MODEL_FORMAT} document")
    if d.get("version") != MODEL_VERSION:
        raise SchemaError(f"unsupported model version {d.get('version')!r}")
    w = np.array(d["weights"], dtype=np.float64)
    if len(w) != d["dim"] or len(d["mean"]) != d["dim"] or len(d["sd"]) != d["dim"]:
        raise SchemaError("model vectors disagree with declared dim")
    cal = d.get("calibration")
    return LinearModel(
        kind=d["kind"], weights=w, bias=float(d["bias"]),
        mean=np.array(d["mean"], dtype=np.float64), sd=np.array(d["sd"], dtype=np.float64),
        C=float(d["C"]), seed=int(d["seed"]),
        calibration=None if cal is None else Calibration(float(cal["A"]), float(cal["B"]),
                                                         bool(cal.get("uninformative", False))),
        source=d.get("source"), hog_params=d.get("hog_params"), meta=d.get("meta") or {},
    )


def save_model(m: LinearModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(m), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> LinearModel:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read model file {path}: {exc}") from None
    try:
        return model_from_dict(d)
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed model file {path}: {exc}") from None
