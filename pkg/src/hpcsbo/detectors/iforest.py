"""Isolation forest with flat array trees."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EULER_GAMMA = 0.5772156649


def harmonic(m: float) -> float:
    return math.log(m) + EULER_GAMMA


def c_factor(m: int) -> float:
    """Average unsuccessful-search path length in a BST of m nodes."""
    if m <= 1:
        return 0.0
    return 2.0 * harmonic(m - 1) - 2.0 * (m - 1) / m


@dataclass(frozen=True)
class Tree:
    # node arrays; feature == -1 marks an external node
    feature: np.ndarray
    value: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray

    def depth(self) -> int:
        def rec(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(rec(self.left[i]), rec(self.right[i]))
        return rec(0)


@dataclass(frozen=True)
class IForestModel:
    trees: tuple[Tree, ...]
    psi: int
    n_trees: int
    c_psi: float
    threshold: float
    contamination: float
    dim: int
    seed: int = 0


def _grow(X: np.ndarray, rng: np.random.Generator, limit: int) -> Tree:
    feat, val, left, right, size = [], [], [], [], []

    def node(idx, depth):
        me = len(feat)
        feat.append(-1), val.append(0.0), left.append(-1), right.append(-1), size.append(len(idx))
        if depth >= limit or len(idx) <= 1:
            return me
        sub = X[idx]
        lo, hi = sub.min(0), sub.max(0)
        # pick among features that still vary in this node
        cand = np.flatnonzero(hi > lo)
        if cand.size == 0:
            return me
        q = int(cand[rng.integers(cand.size)])
        p = float(rng.uniform(lo[q], hi[q]))
        go_left = sub[:, q] < p
        feat[me], val[me] = q, p
        l = node(idx[go_left], depth + 1)
        r = node(idx[~go_left], depth + 1)
        left[me], right[me] = l, r
        return me

    node(np.arange(X.shape[0]), 0)
    return Tree(np.array(feat), np.array(val), np.array(left), np.array(right), np.array(size))


def _path_lengths(tree: Tree, X: np.ndarray) -> np.ndarray:
    n = X.shape[0]
    cur = np.zeros(n, dtype=np.int64)
    depth = np.zeros(n)
    active = tree.feature[cur] >= 0
    rows = np.arange(n)
    while active.any():
        a = rows[active]
        f = tree.feature[cur[a]]
        go_left = X[a, f] < tree.value[cur[a]]
        cur[a] = np.where(go_left, tree.left[cur[a]], tree.right[cur[a]])
        depth[a] += 1
        active = tree.feature[cur] >= 0
    csize = np.array([c_factor(int(m)) for m in tree.size])
    return depth + csize[cur]


def score_iforest(model: IForestModel, x) -> np.ndarray:
    """s(x) = 2^(-E[h(x)] / c(psi)); values near 1 are anomalous."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.dim:
        raise ValueError(f"isolation forest expects {model.dim} features, got {x.shape[1]}")
    eh = np.mean([_path_lengths(t, x) for t in model.trees], axis=0)
    return 2.0 ** (-eh / model.c_psi)


def fit_iforest(X, n_trees: int = 100, psi: int | None = None, seed: int = 0,
                contamination: float = 0.05) -> IForestModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise ValueError("isolation forest needs at least 2 training points")
    psi = min(256, n) if psi is None else min(int(psi), n)
    if psi < 2:
        raise ValueError("psi must be >= 2")
    rng = np.random.default_rng(seed)
    limit = math.ceil(math.log2(psi))
    trees = tuple(_grow(X[rng.choice(n, psi, replace=False)], rng, limit) for _ in range(n_trees))
    c_psi = c_factor(psi)
    proto = IForestModel(trees, psi, n_trees, c_psi, 0.0, contamination, X.shape[1], seed)
    thr = float(np.quantile(score_iforest(proto, X), 1.0 - contamination))
    return IForestModel(trees, psi, n_trees, c_psi, thr, contamination, X.shape[1], seed)


def iforest_anomaly(model: IForestModel, x) -> np.ndarray:
    return score_iforest(model, x) > model.threshold
