"""Detection metrics, the payload-size x feature-count x detector sweep, and reports."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .campaign import (ATTACK, CLEAN, DEFAULT_PCTS, DatasetError, RunRecord, feature_matrix, labels,
                       load_dataset, pct_tag)
from .detectors import DETECTORS, DetectorConfig, Pipeline, fit_autoencoder, fit_pipeline, rank_features
from .detectors.scaler import apply_scaler, fit_scaler
from .emulator import HPC_FIELDS
from .workloads import WORKLOADS

log = logging.getLogger(__name__)

SWEEP_MODES = ("raw", "ae_latent")
RESULTS_HEADER = ("workload", "detector", "mode", "payload_pct", "n_features",
                  "tp", "fp", "tn", "fn", "accuracy", "tpr", "fpr", "precision")


@dataclass(frozen=True)
class Cell:
    workload: str
    detector: str
    mode: str
    payload_pct: float
    n_features: int
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def tpr(self) -> float:
        pos = self.tp + self.fn
        return self.tp / pos if pos else 0.0

    @property
    def fpr(self) -> float:
        neg = self.fp + self.tn
        return self.fp / neg if neg else 0.0

    @property
    def precision(self) -> float:
        # no positive predictions: report 0 rather than undefined
        flagged = self.tp + self.fp
        return self.tp / flagged if flagged else 0.0

    @property
    def key(self) -> tuple:
        return (self.workload, self.detector, self.mode, self.payload_pct, self.n_features)

    def row(self) -> list[str]:
        return [self.workload, self.detector, self.mode, pct_tag(self.payload_pct), str(self.n_features),
                str(self.tp), str(self.fp), str(self.tn), str(self.fn),
                f"{self.accuracy:.6f}", f"{self.tpr:.6f}", f"{self.fpr:.6f}", f"{self.precision:.6f}"]


@dataclass(frozen=True)
class EvalReport:
    cells: tuple[Cell, ...]
    metadata: dict = field(default_factory=dict)

    def lookup(self, workload, detector, mode, pct, n_features) -> Cell:
        for c in self.cells:
            if c.key == (workload, detector, mode, float(pct), n_features):
                return c
        raise KeyError((workload, detector, mode, pct, n_features))

    def accuracy(self, *key) -> float:
        return self.lookup(*key).accuracy


def confusion(pred_anomaly: np.ndarray, is_attack: np.ndarray) -> tuple[int, int, int, int]:
    """(TP, FP, TN, FN) with attack as the positive class."""
    pred_anomaly = np.asarray(pred_anomaly, dtype=bool)
    is_attack = np.asarray(is_attack, dtype=bool)
    tp = int(np.sum(pred_anomaly & is_attack))
    fp = int(np.sum(pred_anomaly & ~is_attack))
    tn = int(np.sum(~pred_anomaly & ~is_attack))
    fn = int(np.sum(~pred_anomaly & is_attack))
    return tp, fp, tn, fn


def _attack_mask(records: Sequence[RunRecord]) -> np.ndarray:
    labs = labels(records)
    bad = [i for i, lab in enumerate(labs) if lab not in (CLEAN, ATTACK)]
    if bad:
        raise DatasetError(f"test row {bad[0]} is unlabelled ({labs[bad[0]]!r})")
    return np.array([lab == ATTACK for lab in labs], dtype=bool)


def test_pct(records: Sequence[RunRecord]) -> float:
    pcts = {r.payload_pct for r in records if r.label == ATTACK}
    if len(pcts) > 1:
        raise DatasetError(f"test set mixes payload percentages {sorted(pcts)}")
    return pcts.pop() if pcts else 0.0


def evaluate(pipeline: Pipeline, records: Sequence[RunRecord], workload: str | None = None) -> Cell:
    """Score every test row against the pipeline's own threshold."""
    if not records:
        raise DatasetError("empty test set")
    is_attack = _attack_mask(records)
    pred = pipeline.predict(feature_matrix(records))
    return Cell(workload or records[0].workload, pipeline.detector, pipeline.mode, test_pct(records),
                len(pipeline.features), *confusion(pred, is_attack))


# ---------------------------------------------------------------------------
# sweep

@dataclass(frozen=True)
class SweepConfig:
    data_dir: Path = Path("campaign")
    workloads: tuple[str, ...] = WORKLOADS
    detectors: tuple[str, ...] = DETECTORS
    modes: tuple[str, ...] = SWEEP_MODES
    payload_pcts: tuple[float, ...] = DEFAULT_PCTS
    max_features: int = len(HPC_FIELDS)
    ranking: str = "single_feature_probe"
    detector: DetectorConfig = field(default_factory=DetectorConfig)

    def __post_init__(self):
        for w in self.workloads:
            if w not in WORKLOADS:
                raise ValueError(f"unknown workload {w!r}")
        for d in self.detectors:
            if d not in DETECTORS:
                raise ValueError(f"unknown detector {d!r}")
        for m in self.modes:
            if m not in SWEEP_MODES:
                raise ValueError(f"sweep mode must be one of {', '.join(SWEEP_MODES)}, got {m!r}")
        if not 1 <= self.max_features <= len(HPC_FIELDS):
            raise ValueError(f"max_features must lie in [1, {len(HPC_FIELDS)}]")
        if not self.payload_pcts or any(p <= 0 for p in self.payload_pcts):
            raise ValueError("payload_pcts must be positive")

    def digest(self) -> str:
        # the data location is not part of what was swept
        d = asdict(self)
        del d["data_dir"]
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class WorkloadData:
    train: list[RunRecord]
    tests: dict[str, list[RunRecord]]
    calib: list[RunRecord]


def load_workload_data(cfg: SweepConfig, workload: str) -> WorkloadData:
    root = Path(cfg.data_dir) / workload
    if not (root / "train.csv").exists():
        raise DatasetError(f"missing training set {root / 'train.csv'}; run the campaign for {workload} first")
    train = load_dataset(root / "train.csv")
    tests, calib = {}, []
    for pct in cfg.payload_pcts:
        tag = pct_tag(pct)
        path = root / f"test_pct{tag}.csv"
        if not path.exists():
            raise DatasetError(f"missing test set {path} for payload_pct={tag}")
        tests[tag] = load_dataset(path)
        cpath = root / f"calib_pct{tag}.csv"
        if cpath.exists():
            calib.extend(load_dataset(cpath))
    return WorkloadData(train, tests, calib)


def feature_order(cfg: SweepConfig, data: WorkloadData) -> tuple[int, ...]:
    X = feature_matrix(data.train)
    if cfg.ranking == "single_feature_probe":
        if not data.calib:
            raise DatasetError("probe ranking needs calib_pct*.csv files next to the test sets")
        return rank_features(X, feature_matrix(data.calib), labels(data.calib), cfg.ranking,
                             train_labels=labels(data.train), k=cfg.detector.k)
    return rank_features(X, method=cfg.ranking, train_labels=labels(data.train))


def _sweep_task(args) -> list[Cell]:
    cfg, workload, order, n = args
    data = load_workload_data(cfg, workload)
    X = feature_matrix(data.train)
    feats = order[:n]
    ae = None
    if "ae_latent" in cfg.modes:
        # one network per (workload, feature subset), shared by the four detectors
        Z = apply_scaler(fit_scaler(X[:, list(feats)]), X[:, list(feats)])
        dc = cfg.detector
        ae = fit_autoencoder(Z, epochs=dc.ae_epochs, lr=dc.ae_lr, batch=dc.ae_batch, seed=dc.seed)
    out = []
    for det in cfg.detectors:
        for mode in cfg.modes:
            pipe = fit_pipeline(X, det, mode, feats, cfg.detector, labels(data.train),
                                autoencoder=ae if mode != "raw" else None)
            for pct in cfg.payload_pcts:
                out.append(evaluate(pipe, data.tests[pct_tag(pct)], workload))
    return out


def sweep(cfg: SweepConfig, n_jobs: int = 1) -> EvalReport:
    tasks = []
    orders = {}
    for w in cfg.workloads:
        data = load_workload_data(cfg, w)
        orders[w] = feature_order(cfg, data)
        log.info("%s: feature order %s", w, ", ".join(HPC_FIELDS[i] for i in orders[w]))
        tasks.extend((cfg, w, orders[w], n) for n in range(1, cfg.max_features + 1))
    if n_jobs <= 1:
        parts = [_sweep_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(_sweep_task, tasks))
    cells = tuple(sorted((c for p in parts for c in p), key=_sort_key))
    meta = {
        "config_hash": cfg.digest(),
        "seed": cfg.detector.seed,
        "ranking": cfg.ranking,
        "feature_order": {w: [HPC_FIELDS[i] for i in o] for w, o in orders.items()},
    }
    return EvalReport(cells, meta)


def _sort_key(c: Cell):
    w = WORKLOADS.index(c.workload) if c.workload in WORKLOADS else len(WORKLOADS)
    d = DETECTORS.index(c.detector) if c.detector in DETECTORS else len(DETECTORS)
    return (w, c.workload, d, c.detector, c.mode, c.payload_pct, c.n_features)


# ---------------------------------------------------------------------------
# report files

_CELL_INTS = ("n_features", "tp", "fp", "tn", "fn")


def save_report(report: EvalReport, path) -> None:
    doc = {"metadata": report.metadata,
           "cells": [{f.name: getattr(c, f.name) for f in fields(Cell)} for c in report.cells]}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_report(path) -> EvalReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        cells = tuple(Cell(c["workload"], c["detector"], c["mode"], float(c["payload_pct"]),
                           *(int(c[k]) for k in _CELL_INTS)) for c in doc["cells"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"cannot read report {path}: {exc}") from exc
    return EvalReport(cells, doc.get("metadata", {}))


def results_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_HEADER)
    for c in report.cells:
        w.writerow(c.row())
    return buf.getvalue()


# chart geometry (pixels)
SVG_W, SVG_H = 640, 420
PLOT_L, PLOT_R, PLOT_T, PLOT_B = 70, 470, 40, 360
Y_MIN, Y_MAX = 0.5, 1.0
PALETTE = {"ocsvm": "#1f77b4", "lof": "#d62728", "iforest": "#2ca02c", "elliptic": "#9467bd",
           "autoencoder": "#8c564b"}


def x_of(pct: float, lo: float, hi: float) -> float:
    """log10-scaled x; a single-point axis puts the point mid-plot."""
    if hi <= lo:
        return (PLOT_L + PLOT_R) / 2
    t = (math.log10(pct) - math.log10(lo)) / (math.log10(hi) - math.log10(lo))
    return PLOT_L + t * (PLOT_R - PLOT_L)


def y_of(acc: float) -> float:
    """Linear y over [Y_MIN, Y_MAX]; accuracies outside are clamped to the axis."""
    a = min(max(acc, Y_MIN), Y_MAX)
    return PLOT_B - (a - Y_MIN) / (Y_MAX - Y_MIN) * (PLOT_B - PLOT_T)


def acc_of(y: float) -> float:
    return Y_MIN + (PLOT_B - y) / (PLOT_B - PLOT_T) * (Y_MAX - Y_MIN)


def render_svg(report: EvalReport, workload: str) -> str:
    cells = [c for c in report.cells if c.workload == workload]
    n_feat = max(c.n_features for c in cells)
    cells = [c for c in cells if c.n_features == n_feat]
    pcts = sorted({c.payload_pct for c in cells})
    lo, hi = pcts[0], pcts[-1]
    series: dict[tuple[str, str], list[Cell]] = {}
    for c in cells:
        series.setdefault((c.detector, c.mode), []).append(c)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" '
           f'viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif" font-size="12">',
           f'<title>{escape(workload)}: accuracy vs payload size ({n_feat} features)</title>',
           f'<rect x="0" y="0" width="{SVG_W}" height="{SVG_H}" fill="white"/>',
           f'<line x1="{PLOT_L}" y1="{PLOT_B}" x2="{PLOT_R}" y2="{PLOT_B}" stroke="black"/>',
           f'<line x1="{PLOT_L}" y1="{PLOT_T}" x2="{PLOT_L}" y2="{PLOT_B}" stroke="black"/>']
    for i in range(6):
        a = Y_MIN + i * (Y_MAX - Y_MIN) / 5
        y = y_of(a)
        out.append(f'<line x1="{PLOT_L - 4}" y1="{y:.3f}" x2="{PLOT_R}" y2="{y:.3f}" stroke="#ddd"/>')
        out.append(f'<text x="{PLOT_L - 8}" y="{y + 4:.3f}" text-anchor="end">{a:.1f}</text>')
    for p in pcts:
        x = x_of(p, lo, hi)
        out.append(f'<line x1="{x:.3f}" y1="{PLOT_B}" x2="{x:.3f}" y2="{PLOT_B + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.3f}" y="{PLOT_B + 18}" text-anchor="middle">{pct_tag(p)}</text>')
    out.append(f'<text x="{(PLOT_L + PLOT_R) / 2}" y="{SVG_H - 20}" text-anchor="middle">'
               'payload size (% of baseline instructions, log scale)</text>')
    out.append(f'<text x="18" y="{(PLOT_T + PLOT_B) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 18 {(PLOT_T + PLOT_B) / 2})">accuracy</text>')
    out.append(f'<text x="{PLOT_L}" y="24" font-size="14">{escape(workload)}</text>')
    for row, ((det, mode), cs) in enumerate(sorted(series.items())):
        cs = sorted(cs, key=lambda c: c.payload_pct)
        pts = " ".join(f"{x_of(c.payload_pct, lo, hi):.3f},{y_of(c.accuracy):.3f}" for c in cs)
        color = PALETTE.get(det, "black")
        dash = ' stroke-dasharray="5,3"' if mode != "raw" else ""
        name = f"{det}/{mode}"
        out.append(f'<polyline data-series="{escape(name)}" points="{pts}" fill="none" '
                   f'stroke="{color}" stroke-width="2"{dash}/>')
        ly = PLOT_T + 10 + 18 * row
        out.append(f'<line x1="{PLOT_R + 15}" y1="{ly}" x2="{PLOT_R + 40}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"{dash}/>')
        out.append(f'<text x="{PLOT_R + 45}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_report(report: EvalReport, out_dir) -> list[Path]:
    if not report.cells:
        raise ValueError("empty report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "results.csv"]
    written[0].write_text(results_csv(report), encoding="utf-8")
    seen = []
    for c in report.cells:
        if c.workload not in seen:
            seen.append(c.workload)
    for w in seen:
        p = out / f"fig_{w}.svg"
        p.write_text(render_svg(report, w), encoding="utf-8")
        written.append(p)
    return written
