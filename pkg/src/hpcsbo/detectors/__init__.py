"""Semi-supervised one-class detectors, all fitted on clean runs only."""
from .autoencoder import AutoencoderModel, default_arch, encode, fit_autoencoder, recon_error
from .elliptic import EllipticModel, fit_elliptic, score_elliptic
from .iforest import IForestModel, c_factor, fit_iforest, score_iforest
from .io import load_pipeline, save_pipeline
from .lof import LofModel, fit_lof, score_lof
from .ocsvm import OcSvmModel, decision_ocsvm, fit_ocsvm
from .pipeline import (DETECTORS, MODES, DetectorConfig, Pipeline, SemiSupervisedError, anomaly,
                       fit_one_class, fit_pipeline, predict, score)
from .ranking import rank_features
from .scaler import ScalerParams, apply_scaler, fit_scaler

__all__ = [
    "AutoencoderModel", "DETECTORS", "DetectorConfig", "EllipticModel", "IForestModel", "LofModel",
    "MODES", "OcSvmModel", "Pipeline", "ScalerParams", "SemiSupervisedError", "anomaly", "apply_scaler",
    "c_factor", "decision_ocsvm", "default_arch", "encode", "fit_autoencoder", "fit_elliptic",
    "fit_iforest", "fit_lof", "fit_ocsvm", "fit_one_class", "fit_pipeline", "fit_scaler",
    "load_pipeline", "predict", "rank_features", "recon_error", "save_pipeline", "score",
    "score_elliptic", "score_iforest", "score_lof",
]
