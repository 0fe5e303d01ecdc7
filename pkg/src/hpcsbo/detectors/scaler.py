"""Per-feature standardization fitted on clean training data."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScalerParams:
    mean: np.ndarray
    std: np.ndarray
    # True where the training column had zero variance (std forced to 1)
    constant: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean and std must be 1-d arrays of equal length")
        if not np.all(self.std > 0):
            raise ValueError("std entries must be positive")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_scaler(train) -> ScalerParams:
    X = np.asarray(train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty training matrix")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    constant = std == 0
    std = np.where(constant, 1.0, std)
    return ScalerParams(mean, std, constant)


def apply_scaler(params: ScalerParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.dim:
        raise ValueError(f"expected {params.dim} features, got {x.shape[-1]}")
    return (x - params.mean) / params.std
