"""Local outlier factor in novelty mode with exhaustive k-NN.

Neighbourhoods follow the original definition: N_k(p) holds every point
whose distance is at most the k-distance of p, so ties can enlarge it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# guards 1 / mean reach-distance when >= k duplicates collapse it to zero
EPS = 1e-10
_BLOCK = 256


@dataclass(frozen=True)
class LofModel:
    X: np.ndarray
    k: int
    k_dist: np.ndarray
    lrd: np.ndarray
    train_scores: np.ndarray
    threshold: float
    quantile: float = 0.95

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def pairwise_dist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Euclidean distances by explicit differences (no Gram-matrix shortcut)."""
    out = np.empty((A.shape[0], B.shape[0]))
    for s in range(0, A.shape[0], _BLOCK):
        diff = A[s:s + _BLOCK, None, :] - B[None, :, :]
        out[s:s + _BLOCK] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def _kth(D: np.ndarray, k: int) -> np.ndarray:
    return np.partition(D, k - 1, axis=1)[:, k - 1]


def _lrd_and_mask(D: np.ndarray, k: int, k_dist_train: np.ndarray):
    kd = _kth(D, k)
    mask = D <= kd[:, None]
    reach = np.maximum(D, k_dist_train[None, :])
    mean_reach = np.where(mask, reach, 0.0).sum(axis=1) / mask.sum(axis=1)
    return 1.0 / (mean_reach + EPS), mask


def _lof_rows(D, k, k_dist, lrd):
    lrd_q, mask = _lrd_and_mask(D, k, k_dist)
    neigh = np.where(mask, lrd[None, :], 0.0).sum(axis=1) / mask.sum(axis=1)
    return neigh / lrd_q


def fit_lof(X, k: int = 20, quantile: float = 0.95) -> LofModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n <= k:
        raise ValueError(f"LOF needs more than k={k} training points, got {n}")
    D = pairwise_dist(X, X)
    np.fill_diagonal(D, np.inf)  # a training point is never its own neighbour
    k_dist = _kth(D, k)
    lrd, _ = _lrd_and_mask(D, k, k_dist)
    train_scores = _lof_rows(D, k, k_dist, lrd)
    thr = float(np.quantile(train_scores, quantile))
    return LofModel(X, k, k_dist, lrd, train_scores, thr, quantile)


def score_lof(model: LofModel, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.dim:
        raise ValueError(f"LOF model expects {model.dim} features, got {x.shape[1]}")
    out = np.empty(x.shape[0])
    for s in range(0, x.shape[0], _BLOCK):
        D = pairwise_dist(x[s:s + _BLOCK], model.X)
        out[s:s + _BLOCK] = _lof_rows(D, model.k, model.k_dist, model.lrd)
    return out


def lof_anomaly(model: LofModel, x) -> np.ndarray:
    return score_lof(model, x) > model.threshold
