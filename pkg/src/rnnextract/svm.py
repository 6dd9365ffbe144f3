"""Soft-margin RBF-kernel SVM trained by sequential minimal optimization.

Working pairs are chosen by the maximal-violating-pair rule with second
order information, as in libsvm, which makes training deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_C = 1e4
KKT_TOL = 1e-3
_TAU = 1e-12


@dataclass(frozen=True)
class RbfSvmModel:
    support_vectors: np.ndarray  # (n_sv, d)
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    C: float

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ValueError(f"vector dimension {X.shape[1]} does not match model dimension {self.dim}")
        return rbf_kernel(X, self.support_vectors, self.gamma) @ self.dual_coef + self.bias

    def to_json(self) -> dict:
        return {"support_vectors": self.support_vectors.tolist(), "dual_coef": self.dual_coef.tolist(),
                "bias": self.bias, "gamma": self.gamma, "C": self.C}

    @classmethod
    def from_json(cls, doc: dict) -> "RbfSvmModel":
        sv = np.asarray(doc["support_vectors"], dtype=np.float64)
        coef = np.asarray(doc["dual_coef"], dtype=np.float64)
        if sv.ndim != 2 or coef.shape != (sv.shape[0],):
            raise ValueError("support vectors and coefficients disagree in shape")
        return cls(sv, coef, float(doc["bias"]), float(doc["gamma"]), float(doc["C"]))


@dataclass(frozen=True)
class FitReport:
    perfect: bool
    n_misclassified: int
    kkt_gap: float
    n_iter: int
    objective: float


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def decide(model: RbfSvmModel, x) -> bool:
    """True for the positive side; a zero decision value counts as positive."""
    return bool(model.decision_function(x)[0] >= 0.0)


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    """0.5 a'Qa - sum(a) with Q_ij = y_i y_j K_ij (the quantity SMO minimizes)."""
    ay = alpha * y
    return float(0.5 * ay @ K @ ay - alpha.sum())


def solve_dual(K: np.ndarray, y: np.ndarray, C: float, tol: float = KKT_TOL,
               max_iter: Optional[int] = None):
    """Minimize the soft-margin dual. Returns (alpha, bias, kkt_gap, n_iter)."""
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    diag = np.diag(K).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    max_iter = max_iter or max(100_000, 100 * n)
    it = 0
    gap = np.inf
    while it < max_iter:
        minus_yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            gap = 0.0
            break
        cand_up = np.where(up, minus_yG, -np.inf)
        i = int(np.argmax(cand_up))
        g_max = cand_up[i]
        g_min = np.min(np.where(low, minus_yG, np.inf))
        gap = g_max - g_min
        if gap < tol:
            break
        b = g_max - minus_yG
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0, a, _TAU)
        score = np.where(low & (b > 0), -(b * b) / a, np.inf)
        j = int(np.argmin(score))
        it += 1

        old_i, old_j = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(diag[i] + diag[j] + 2.0 * Q[i, j], _TAU)
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            elif alpha[j] > C:
                alpha[j] = C
                alpha[i] = C + diff
        else:
            quad = max(diag[i] + diag[j] - 2.0 * Q[i, j], _TAU)
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            elif alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = total
        G += Q[:, i] * (alpha[i] - old_i) + Q[:, j] * (alpha[j] - old_j)
    else:
        log.warning("SMO stopped at the iteration cap with KKT gap %.3g", gap)

    # bias from free vectors, else the midpoint of the feasible interval
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(np.mean(yG[free]))
    else:
        minus_yG = -yG
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        ub = np.min(np.where(up, yG, np.inf)) if up.any() else np.inf
        lb = np.max(np.where(low, yG, -np.inf)) if low.any() else -np.inf
        rho = float((ub + lb) / 2) if np.isfinite(ub) and np.isfinite(lb) else float(
            ub if np.isfinite(ub) else lb)
    return alpha, -rho, float(gap), it


def fit(positive, negative, C: float = DEFAULT_C, gamma: Optional[float] = None,
        seed: int = 0, tol: float = KKT_TOL) -> tuple:
    """Separate ``positive`` from ``negative`` vectors. Returns (model, report).

    ``gamma`` defaults to 1/dimension. ``seed`` is accepted for interface
    stability; pair selection is deterministic.
    """
    P = np.atleast_2d(np.asarray(positive, dtype=np.float64))
    N = np.atleast_2d(np.asarray(negative, dtype=np.float64))
    if P.size == 0 or N.size == 0:
        raise ValueError("both classes must be non-empty")
    if P.shape[1] != N.shape[1]:
        raise ValueError(f"dimension mismatch: {P.shape[1]} vs {N.shape[1]}")
    X = np.vstack([P, N])
    y = np.concatenate([np.ones(len(P)), -np.ones(len(N))])
    gamma = 1.0 / X.shape[1] if gamma is None else float(gamma)
    K = rbf_kernel(X, X, gamma)
    alpha, bias, gap, n_iter = solve_dual(K, y, C, tol)
    sv = alpha > 0
    model = RbfSvmModel(X[sv].copy(), (alpha * y)[sv], bias, gamma, float(C))
    pred = (K[:, sv] @ model.dual_coef + bias) >= 0.0
    wrong = int(np.sum(pred != (y > 0)))
    return model, FitReport(wrong == 0, wrong, gap, n_iter, dual_objective(alpha, y, K))
