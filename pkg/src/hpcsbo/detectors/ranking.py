"""Feature ordering for the top-n feature sweeps."""
from __future__ import annotations

import numpy as np

from .lof import fit_lof, lof_anomaly
from .pipeline import CLEAN, require_clean
from .scaler import apply_scaler, fit_scaler

METHODS = ("dispersion", "single_feature_probe")


def coefficient_of_variation(X: np.ndarray) -> np.ndarray:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = std / np.abs(mean)
    cv[std == 0] = 0.0
    return cv


def balanced_accuracy(pred_anomaly: np.ndarray, is_attack: np.ndarray) -> float:
    tpr = pred_anomaly[is_attack].mean()
    tnr = (~pred_anomaly[~is_attack]).mean()
    return float((tpr + tnr) / 2)


def probe_scores(train: np.ndarray, calib: np.ndarray, is_attack: np.ndarray, k: int = 20) -> np.ndarray:
    """Balanced accuracy of a LOF detector fitted on each feature alone."""
    out = np.empty(train.shape[1])
    for j in range(train.shape[1]):
        sc = fit_scaler(train[:, [j]])
        model = fit_lof(apply_scaler(sc, train[:, [j]]), k)
        out[j] = balanced_accuracy(lof_anomaly(model, apply_scaler(sc, calib[:, [j]])), is_attack)
    return out


def rank_features(train, calib=None, calib_labels=None, method: str = "single_feature_probe",
                  train_labels=None, k: int = 20) -> tuple[int, ...]:
    """Feature indices, best first. Ties keep index order."""
    require_clean(train_labels)
    train = np.asarray(train, dtype=np.float64)
    if method == "dispersion":
        key = coefficient_of_variation(train)
    elif method == "single_feature_probe":
        if calib is None or calib_labels is None:
            raise ValueError("the probe method needs a labelled calibration set")
        is_attack = np.array([lab != CLEAN for lab in calib_labels])
        if is_attack.all() or not is_attack.any():
            raise ValueError("the probe calibration set must contain both clean and attack rows")
        key = -probe_scores(train, np.asarray(calib, dtype=np.float64), is_attack, k)
    else:
        raise ValueError(f"unknown ranking method {method!r}; expected one of {', '.join(METHODS)}")
    return tuple(int(i) for i in np.argsort(key, kind="stable"))
