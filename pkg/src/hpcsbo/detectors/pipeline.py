"""Detector dispatch, the feature-subset / scaler / autoencoder pipeline, and predict."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autoencoder import AutoencoderModel, encode, fit_autoencoder, recon_anomaly, recon_error
from .elliptic import EllipticModel, elliptic_anomaly, fit_elliptic, score_elliptic
from .iforest import IForestModel, fit_iforest, iforest_anomaly, score_iforest
from .lof import LofModel, fit_lof, lof_anomaly, score_lof
from .ocsvm import OcSvmModel, decision_ocsvm, fit_ocsvm, ocsvm_anomaly
from .scaler import ScalerParams, apply_scaler, fit_scaler

DETECTORS = ("ocsvm", "lof", "iforest", "elliptic")
MODES = ("raw", "ae_latent", "ae_recon")
CLEAN = "clean"


class SemiSupervisedError(ValueError):
    """Attack-labelled rows were passed to a fit."""


@dataclass(frozen=True)
class DetectorConfig:
    nu: float = 0.05
    gamma: float | None = None  # None means 1 / n_features
    k: int = 20
    lof_quantile: float = 0.95
    n_trees: int = 100
    psi: int = 256
    contamination: float = 0.05
    n_subsets: int = 50
    ae_epochs: int = 200
    ae_lr: float = 1e-3
    ae_batch: int = 32
    seed: int = 0


def require_clean(labels) -> None:
    if labels is None:
        return
    bad = [i for i, lab in enumerate(labels) if lab != CLEAN]
    if bad:
        raise SemiSupervisedError(
            f"fit received {len(bad)} non-clean row(s) (first at index {bad[0]}); "
            "detectors are trained on clean runs only")


def fit_one_class(detector: str, X, config: DetectorConfig = DetectorConfig(), labels=None):
    require_clean(labels)
    if detector == "ocsvm":
        return fit_ocsvm(X, config.nu, config.gamma)
    if detector == "lof":
        return fit_lof(X, config.k, config.lof_quantile)
    if detector == "iforest":
        return fit_iforest(X, config.n_trees, config.psi, config.seed, config.contamination)
    if detector == "elliptic":
        return fit_elliptic(X, contamination=config.contamination, seed=config.seed,
                            n_subsets=config.n_subsets)
    raise ValueError(f"unknown detector {detector!r}; expected one of {', '.join(DETECTORS)}")


def score(model, x) -> np.ndarray:
    """Native score: OC-SVM decision value (high = normal); LOF, IF, EE and AE error (high = anomalous)."""
    if isinstance(model, OcSvmModel):
        return decision_ocsvm(model, x)
    if isinstance(model, LofModel):
        return score_lof(model, x)
    if isinstance(model, IForestModel):
        return score_iforest(model, x)
    if isinstance(model, EllipticModel):
        return score_elliptic(model, x)
    if isinstance(model, AutoencoderModel):
        return recon_error(model, x)
    raise TypeError(f"not a detector model: {type(model).__name__}")


def anomaly(model, x) -> np.ndarray:
    if isinstance(model, OcSvmModel):
        return ocsvm_anomaly(model, x)
    if isinstance(model, LofModel):
        return lof_anomaly(model, x)
    if isinstance(model, IForestModel):
        return iforest_anomaly(model, x)
    if isinstance(model, EllipticModel):
        return elliptic_anomaly(model, x)
    if isinstance(model, AutoencoderModel):
        return recon_anomaly(model, x)
    raise TypeError(f"not a detector model: {type(model).__name__}")


def predict(model, x, mode: str = "raw", autoencoder: AutoencoderModel | None = None) -> np.ndarray:
    """True where x (already standardized) is classified as an anomaly."""
    if mode == "raw":
        return anomaly(model, x)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if autoencoder is None:
        raise ValueError(f"mode {mode} needs a fitted autoencoder")
    if mode == "ae_latent":
        return anomaly(model, encode(autoencoder, x))
    return recon_anomaly(autoencoder, x)


@dataclass(frozen=True)
class Pipeline:
    detector: str
    mode: str
    features: tuple[int, ...]
    scaler: ScalerParams
    model: object | None
    autoencoder: AutoencoderModel | None = None
    config: DetectorConfig = field(default_factory=DetectorConfig)

    def transform(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return apply_scaler(self.scaler, X[:, list(self.features)])

    def predict(self, X) -> np.ndarray:
        return predict(self.model, self.transform(X), self.mode, self.autoencoder)


def fit_pipeline(X, detector: str, mode: str = "raw", features: Sequence[int] | None = None,
                 config: DetectorConfig = DetectorConfig(), labels=None,
                 autoencoder: AutoencoderModel | None = None) -> Pipeline:
    """Fit scaler, optional autoencoder and one-class model on clean rows of X.

    ``autoencoder`` lets callers share one trained network across detectors; it
    must have been fitted on the same standardized feature subset.
    """
    require_clean(labels)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    feats = tuple(range(X.shape[1])) if features is None else tuple(int(f) for f in features)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    scaler = fit_scaler(X[:, list(feats)])
    Z = apply_scaler(scaler, X[:, list(feats)])
    ae = None
    if mode != "raw":
        ae = autoencoder or fit_autoencoder(Z, epochs=config.ae_epochs, lr=config.ae_lr,
                                            batch=config.ae_batch, seed=config.seed)
        if ae.dim != Z.shape[1]:
            raise ValueError(f"autoencoder expects {ae.dim} features, pipeline has {Z.shape[1]}")
    if mode == "ae_recon":
        return Pipeline("autoencoder", mode, feats, scaler, None, ae, config)
    inputs = Z if mode == "raw" else encode(ae, Z)
    model = fit_one_class(detector, inputs, config)
    return Pipeline(detector, mode, feats, scaler, model, ae, config)
