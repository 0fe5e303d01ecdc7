"""Model files: JSON documents tagged with a model kind.

Schema (format 1)::

    {"format": 1, "kind": "pipeline", "detector": ..., "mode": ...,
     "features": [...], "config": {...}, "scaler": {...},
     "model": {"kind": "ocsvm" | "lof" | "iforest" | "elliptic", ...} | null,
     "autoencoder": {"kind": "autoencoder", ...} | null}

Floats are written as decimals with 17 significant digits (non-finite
values as NaN / Infinity), so loading reproduces every parameter bit for bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .autoencoder import AutoencoderModel
from .elliptic import EllipticModel
from .iforest import IForestModel, Tree
from .lof import LofModel
from .ocsvm import OcSvmModel
from .pipeline import DetectorConfig, Pipeline
from .scaler import ScalerParams

FORMAT = 1


class ModelFormatError(ValueError):
    pass


def _arr(a) -> list:
    return np.asarray(a).tolist()


def model_to_dict(model) -> dict:
    if isinstance(model, OcSvmModel):
        return {"kind": "ocsvm", "nu": model.nu, "gamma": model.gamma, "rho": model.rho,
                "n_iter": model.n_iter, "objective": model.objective,
                "alphas": _arr(model.alphas), "support_vectors": _arr(model.support_vectors)}
    if isinstance(model, LofModel):
        return {"kind": "lof", "k": model.k, "quantile": model.quantile, "threshold": model.threshold,
                "X": _arr(model.X), "k_dist": _arr(model.k_dist), "lrd": _arr(model.lrd),
                "train_scores": _arr(model.train_scores)}
    if isinstance(model, IForestModel):
        return {"kind": "iforest", "psi": model.psi, "n_trees": model.n_trees, "c_psi": model.c_psi,
                "threshold": model.threshold, "contamination": model.contamination, "dim": model.dim,
                "seed": model.seed,
                "trees": [{f: _arr(getattr(t, f)) for f in ("feature", "value", "left", "right", "size")}
                          for t in model.trees]}
    if isinstance(model, EllipticModel):
        return {"kind": "elliptic", "h": model.h, "ridge": model.ridge, "log_det": model.log_det,
                "threshold": model.threshold, "contamination": model.contamination, "seed": model.seed,
                "location": _arr(model.location), "precision": _arr(model.precision)}
    if isinstance(model, AutoencoderModel):
        return {"kind": "autoencoder", "sizes": list(model.sizes), "epochs": model.epochs,
                "lr": model.lr, "batch": model.batch, "seed": model.seed,
                "final_loss": model.final_loss, "recon_threshold": model.recon_threshold,
                "weights": [_arr(w) for w in model.weights], "biases": [_arr(b) for b in model.biases]}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict):
    f = lambda key: np.asarray(d[key], dtype=np.float64)  # noqa: E731
    try:
        kind = d["kind"]
        if kind == "ocsvm":
            sv = np.asarray(d["support_vectors"], dtype=np.float64).reshape(len(d["alphas"]), -1)
            return OcSvmModel(sv, f("alphas"), float(d["rho"]), float(d["gamma"]), float(d["nu"]),
                              int(d["n_iter"]), float(d["objective"]))
        if kind == "lof":
            return LofModel(f("X"), int(d["k"]), f("k_dist"), f("lrd"), f("train_scores"),
                            float(d["threshold"]), float(d["quantile"]))
        if kind == "iforest":
            trees = tuple(Tree(np.asarray(t["feature"], dtype=np.int64), np.asarray(t["value"], dtype=np.float64),
                               np.asarray(t["left"], dtype=np.int64), np.asarray(t["right"], dtype=np.int64),
                               np.asarray(t["size"], dtype=np.int64)) for t in d["trees"])
            return IForestModel(trees, int(d["psi"]), int(d["n_trees"]), float(d["c_psi"]),
                                float(d["threshold"]), float(d["contamination"]), int(d["dim"]), int(d["seed"]))
        if kind == "elliptic":
            return EllipticModel(f("location"), f("precision"), float(d["threshold"]), int(d["h"]),
                                 float(d["ridge"]), float(d["log_det"]), float(d["contamination"]),
                                 int(d["seed"]))
        if kind == "autoencoder":
            return AutoencoderModel(tuple(d["sizes"]),
                                    tuple(np.asarray(w, dtype=np.float64) for w in d["weights"]),
                                    tuple(np.asarray(b, dtype=np.float64) for b in d["biases"]),
                                    int(d["epochs"]), float(d["lr"]), int(d["batch"]), int(d["seed"]),
                                    float(d["final_loss"]), float(d["recon_threshold"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed {d.get('kind', '?')} model: {exc}") from exc
    raise ModelFormatError(f"unknown model kind {d.get('kind')!r}")


def pipeline_to_dict(p: Pipeline) -> dict:
    return {
        "format": FORMAT, "kind": "pipeline", "detector": p.detector, "mode": p.mode,
        "features": list(p.features), "config": asdict(p.config),
        "scaler": {"mean": _arr(p.scaler.mean), "std": _arr(p.scaler.std), "constant": _arr(p.scaler.constant)},
        "model": None if p.model is None else model_to_dict(p.model),
        "autoencoder": None if p.autoencoder is None else model_to_dict(p.autoencoder),
    }


def pipeline_from_dict(d: dict) -> Pipeline:
    if d.get("kind") != "pipeline" or d.get("format") != FORMAT:
        raise ModelFormatError(f"not a format-{FORMAT} pipeline document")
    try:
        s = d["scaler"]
        scaler = ScalerParams(np.asarray(s["mean"], dtype=np.float64), np.asarray(s["std"], dtype=np.float64),
                              np.asarray(s["constant"], dtype=bool))
        model = None if d["model"] is None else model_from_dict(d["model"])
        ae = None if d["autoencoder"] is None else model_from_dict(d["autoencoder"])
        return Pipeline(d["detector"], d["mode"], tuple(int(i) for i in d["features"]), scaler, model, ae,
                        DetectorConfig(**d["config"]))
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed pipeline document: {exc}") from exc


def _float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps(obj) -> str:
    """Compact JSON with sorted keys and 17-significant-digit floats."""
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}:{dumps(obj[k])}" for k in sorted(obj))
        return "{" + ",".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, float):
        return _float(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def save_pipeline(p: Pipeline, path) -> None:
    Path(path).write_text(dumps(pipeline_to_dict(p)) + "\n", encoding="utf-8")


def load_pipeline(path) -> Pipeline:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    return pipeline_from_dict(doc)
