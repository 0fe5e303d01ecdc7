"""Qualitative reproduction checks over a finished sweep and campaign.

Each check returns a ``Check`` carrying a verdict and a one-line detail so the
same logic serves the acceptance tests and the experiment scripts.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .campaign import load_dataset, read_metadata
from .detectors import DETECTORS
from .evaluation import EvalReport

STABLE = ("aes", "rsa_fixed", "sha", "dijkstra")
ALL_FEATURES = 8
TREND_BAND = 0.02


@dataclass(frozen=True)
class Check:
    criterion: int
    passed: bool
    detail: str

    def line(self) -> str:
        return f"criterion {self.criterion:>2}: {'PASS' if self.passed else 'FAIL'}  {self.detail}"


def accuracy_at_one_percent(report: EvalReport, threshold: float = 0.90, need: int = 14) -> Check:
    accs = {(w, d): report.accuracy(w, d, "raw", 1.0, ALL_FEATURES) for w in STABLE for d in DETECTORS}
    ok = [k for k, a in accs.items() if a > threshold]
    misses = ", ".join(f"{w}/{d}={a:.3f}" for (w, d), a in accs.items() if a <= threshold)
    return Check(1, len(ok) >= need, f"{len(ok)}/{len(accs)} cells > {threshold:.2f}"
                 + (f" (misses: {misses})" if misses else ""))


def lof_single_feature(report: EvalReport, threshold: float = 0.90) -> Check:
    accs = {w: report.accuracy(w, "lof", "raw", 1.0, 1) for w in ("aes", "rsa_fixed", "sha")}
    return Check(2, all(a >= threshold for a in accs.values()),
                 ", ".join(f"{w}={a:.3f}" for w, a in accs.items()))


def rsa_full_degrades(report: EvalReport, gap: float = 0.05, need: int = 3) -> Check:
    diffs = {d: report.accuracy("rsa_fixed", d, "raw", 1.0, ALL_FEATURES)
             - report.accuracy("rsa_full", d, "raw", 1.0, ALL_FEATURES) for d in DETECTORS}
    n = sum(v >= gap for v in diffs.values())
    return Check(3, n >= need, f"{n}/4 detectors drop >= {gap:.2f}: "
                 + ", ".join(f"{d}={v:+.3f}" for d, v in diffs.items()))


def autoencoder_gain(report: EvalReport, band: float = 0.05) -> Check:
    """Mean over the grid of |ae_latent - raw| per detector."""
    gaps: dict[str, list[float]] = {}
    for c in report.cells:
        if c.mode != "raw":
            continue
        ae = report.accuracy(c.workload, c.detector, "ae_latent", c.payload_pct, c.n_features)
        gaps.setdefault(c.detector, []).append(ae - c.accuracy)
    means = {d: float(np.mean(np.abs(v))) for d, v in gaps.items()}
    signed = {d: float(np.mean(v)) for d, v in gaps.items()}
    return Check(4, bool(means) and all(m <= band for m in means.values()),
                 ", ".join(f"{d}={means[d]:.3f}" for d in means) + f" (limit {band:.2f}; signed mean "
                 + ", ".join(f"{signed[d]:+.3f}" for d in signed) + ")")


def trend_breaks(report: EvalReport, mode: str = "raw", n_features: int = ALL_FEATURES,
                 band: float = TREND_BAND) -> list[str]:
    """Series where accuracy at some payload size falls more than ``band`` below a smaller one."""
    series: dict[tuple[str, str], list] = {}
    for c in report.cells:
        if c.mode == mode and c.n_features == n_features:
            series.setdefault((c.workload, c.detector), []).append(c)
    out = []
    for (w, d), cells in series.items():
        cells.sort(key=lambda c: c.payload_pct)
        for i, a in enumerate(cells):
            for b in cells[i + 1:]:
                if b.accuracy < a.accuracy - band:
                    out.append(f"{w}/{d} {a.payload_pct:g}%->{b.payload_pct:g}%: "
                               f"{a.accuracy:.3f}->{b.accuracy:.3f}")
    return out


def payload_trend(report: EvalReport) -> Check:
    bad = trend_breaks(report)
    info = trend_breaks(report, "ae_latent")
    n = len({(c.workload, c.detector) for c in report.cells if c.mode == "raw"})
    detail = f"{n - len({b.split()[0] for b in bad})}/{n} raw series monotone within {TREND_BAND:.2f}"
    if bad:
        detail += f" (breaks: {'; '.join(bad)})"
    if info:
        detail += f" [ae_latent, not gated: {len(info)} breaks]"
    return Check(5, not bad, detail)


def label_soundness(root) -> Check:
    n = bad = 0
    first = ""
    for path in sorted(Path(root).glob("*/*.csv")):
        for r in load_dataset(path):
            n += 1
            if r.soundness_errors():
                bad += 1
                first = first or f"{path.name} run {r.run_index}"
    return Check(7, n > 0 and bad == 0, f"{n} runs, {bad} unsound" + (f" (first: {first})" if first else ""))


def calibration_shares(root, pcts=(1.0, 2.0, 5.0), tol: float = 0.10) -> Check:
    bad, seen = [], 0
    for w in STABLE:
        meta = read_metadata(Path(root) / w / "metadata.txt")
        for p in pcts:
            share = float(meta[f"achieved_share_pct{p:g}"])
            seen += 1
            if abs(share - p) > tol * p:
                bad.append(f"{w}@{p:g}%={share:.3f}")
    return Check(10, not bad, f"{seen - len(bad)}/{seen} shares within {tol:.0%}"
                 + (f" (off: {', '.join(bad)})" if bad else ""))


def report_checks(report: EvalReport) -> list[Check]:
    return [accuracy_at_one_percent(report), lof_single_feature(report), rsa_full_degrades(report),
            autoencoder_gain(report), payload_trend(report)]
