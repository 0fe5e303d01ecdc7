"""One-class SVM solved in the dual by sequential minimal optimization.

Dual problem (box scaled so the weights sum to one):

    min_a  0.5 * a' K a    s.t.  0 <= a_i <= 1 / (nu * n),  sum(a) = 1

with an RBF kernel. Each step moves weight between the maximal violating
pair (i, j) along the line that keeps the sum fixed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

SV_EPS = 1e-8
# kernel matrices up to this many rows are materialised; larger ones use on-demand rows
DENSE_LIMIT = 6000


@dataclass(frozen=True)
class OcSvmModel:
    support_vectors: np.ndarray
    alphas: np.ndarray
    rho: float
    gamma: float
    nu: float
    n_iter: int = 0
    objective: float = 0.0

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]


def rbf(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


class _Rows:
    def __init__(self, X, gamma):
        self.X, self.gamma = X, gamma
        self.K = rbf(X, X, gamma) if X.shape[0] <= DENSE_LIMIT else None

    def __getitem__(self, i):
        if self.K is not None:
            return self.K[i]
        return rbf(self.X[i:i + 1], self.X, self.gamma)[0]

    def matvec(self, a):
        if self.K is not None:
            return self.K @ a
        nz = np.flatnonzero(a)
        return rbf(self.X, self.X[nz], self.gamma) @ a[nz]


def dual_objective(K: np.ndarray, alpha: np.ndarray) -> float:
    return 0.5 * float(alpha @ K @ alpha)


def solve_dual(X: np.ndarray, nu: float, gamma: float, tol: float = 1e-4,
               max_iter: int | None = None) -> tuple[np.ndarray, float, int]:
    """Returns (alpha, rho, iterations)."""
    n = X.shape[0]
    C = 1.0 / (nu * n)
    m = min(int(nu * n), n)
    alpha = np.zeros(n)
    alpha[:m] = C
    if m < n:
        alpha[m] = 1.0 - m * C
    Q = _Rows(X, gamma)
    G = Q.matvec(alpha)
    max_iter = max_iter or max(100_000, 100 * n)
    it = 0
    while it < max_iter:
        up = alpha < C
        low = alpha > 0
        Gu = np.where(up, G, np.inf)
        Gl = np.where(low, G, -np.inf)
        i = int(np.argmin(Gu))
        j = int(np.argmax(Gl))
        if Gl[j] - Gu[i] < tol:
            break
        Ki, Kj = Q[i], Q[j]
        eta = max(Ki[i] + Kj[j] - 2.0 * Ki[j], 1e-12)
        t = (G[j] - G[i]) / eta
        cap_i, cap_j = C - alpha[i], alpha[j]
        if t >= cap_i:
            t = cap_i
        if t >= cap_j:
            t = cap_j
        alpha[i] = C if t == cap_i else alpha[i] + t
        alpha[j] = 0.0 if t == cap_j else alpha[j] - t
        G += t * (Ki - Kj)
        it += 1
    else:
        log.warning("OC-SVM solver stopped after %d iterations without reaching tol=%g", it, tol)
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(G[free].mean())
    else:
        at_c = G[alpha >= C]
        at_0 = G[alpha <= 0]
        lo = at_c.max() if at_c.size else -np.inf
        hi = at_0.min() if at_0.size else np.inf
        rho = float((lo + hi) / 2) if np.isfinite(lo) and np.isfinite(hi) else float(lo if np.isfinite(lo) else hi)
    return alpha, rho, it


def fit_ocsvm(X, nu: float = 0.05, gamma: float | None = None, tol: float = 1e-4) -> OcSvmModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    if not 0 < nu <= 1:
        raise ValueError("nu must lie in (0, 1]")
    if nu * n < 1:
        raise ValueError(f"nu * n = {nu * n:g} < 1: the box constraint admits no solution")
    gamma = 1.0 / d if gamma is None else float(gamma)
    alpha, rho, it = solve_dual(X, nu, gamma, tol)
    keep = alpha > SV_EPS
    sv, a = X[keep], alpha[keep]
    obj = dual_objective(rbf(sv, sv, gamma), a)
    return OcSvmModel(sv.copy(), a.copy(), rho, gamma, nu, it, obj)


def decision_ocsvm(model: OcSvmModel, x) -> np.ndarray:
    """sum_i a_i K(x, sv_i) - rho; non-negative means inlier."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.dim:
        raise ValueError(f"OC-SVM model expects {model.dim} features, got {x.shape[1]}")
    return rbf(x, model.support_vectors, model.gamma) @ model.alphas - model.rho


def ocsvm_anomaly(model: OcSvmModel, x) -> np.ndarray:
    return decision_ocsvm(model, x) < 0
