"""Elliptic envelope on a FastMCD-style robust location and covariance.

The raw minimum-determinant estimate is made consistent at the normal model
(scaled so the median squared distance matches the chi-square median), then
reweighted: location and covariance are recomputed from the points whose
corrected distance lies within the 0.975 chi-square quantile.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

log = logging.getLogger(__name__)

RIDGE = 1e-6
# covariances with a worse condition number get RIDGE * I added
MAX_COND = 1e12
REWEIGHT_QUANTILE = 0.975


@dataclass(frozen=True)
class EllipticModel:
    location: np.ndarray
    precision: np.ndarray
    threshold: float
    h: int
    ridge: float
    log_det: float
    contamination: float = 0.05
    seed: int = 0

    @property
    def dim(self) -> int:
        return self.location.shape[0]


def _estimate(S: np.ndarray):
    loc = S.mean(axis=0)
    Z = S - loc
    cov = Z.T @ Z / S.shape[0]
    w = np.linalg.eigvalsh(cov)
    ridge = 0.0
    if w[0] <= 0 or w[-1] / w[0] > MAX_COND:
        ridge = RIDGE
        cov = cov + ridge * np.eye(cov.shape[0])
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise np.linalg.LinAlgError("covariance is not positive definite after ridge")
    return loc, cov, logdet, ridge


def mahalanobis2(X: np.ndarray, loc: np.ndarray, precision: np.ndarray) -> np.ndarray:
    Z = X - loc
    return np.einsum("ij,jk,ik->i", Z, precision, Z)


def _csteps(X, idx, h, max_steps, tol):
    loc, cov, logdet, ridge = _estimate(X[idx])
    for _ in range(max_steps):
        d2 = mahalanobis2(X, loc, np.linalg.inv(cov))
        idx = np.argsort(d2, kind="stable")[:h]
        loc2, cov2, logdet2, ridge2 = _estimate(X[idx])
        done = abs(logdet - logdet2) < tol
        loc, cov, logdet, ridge = loc2, cov2, logdet2, ridge2
        if done:
            break
    return loc, cov, logdet, ridge


def _reweight(X, loc, cov, ridge):
    n, d = X.shape
    d2 = mahalanobis2(X, loc, np.linalg.inv(cov))
    med = float(np.median(d2))
    if med > 0:
        d2 = d2 * (chi2.ppf(0.5, d) / med)
    keep = d2 <= chi2.ppf(REWEIGHT_QUANTILE, d)
    if keep.sum() <= d:
        return loc, cov, ridge
    loc2, cov2, _, ridge2 = _estimate(X[keep])
    return loc2, cov2, max(ridge, ridge2)


def fit_elliptic(X, h: int | None = None, contamination: float = 0.05, seed: int = 0,
                 n_subsets: int = 50, max_steps: int = 100, tol: float = 1e-9) -> EllipticModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    if n <= d:
        raise ValueError(f"elliptic envelope needs n > d, got n={n}, d={d}")
    h = (n + d + 1) // 2 if h is None else int(h)
    if not d < h <= n:
        raise ValueError(f"support size h={h} must lie in ({d}, {n}]")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_subsets):
        idx = np.sort(rng.choice(n, h, replace=False))
        cand = _csteps(X, idx, h, max_steps, tol)
        if best is None or cand[2] < best[2]:
            best = cand
    loc, cov, logdet, ridge = best
    loc, cov, ridge = _reweight(X, loc, cov, ridge)
    prec = np.linalg.inv(cov)
    prec = (prec + prec.T) / 2
    thr = float(np.quantile(mahalanobis2(X, loc, prec), 1.0 - contamination))
    if ridge:
        log.debug("elliptic envelope: ridge %g added to the MCD covariance", ridge)
    return EllipticModel(loc, prec, thr, h, ridge, float(logdet), contamination, seed)


def score_elliptic(model: EllipticModel, x) -> np.ndarray:
    """Squared Mahalanobis distance to the robust location."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.dim:
        raise ValueError(f"elliptic model expects {model.dim} features, got {x.shape[1]}")
    return mahalanobis2(x, model.location, model.precision)


def elliptic_anomaly(model: EllipticModel, x) -> np.ndarray:
    return score_elliptic(model, x) > model.threshold
