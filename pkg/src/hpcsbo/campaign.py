"""Seeded batches of clean and attack runs, persisted as CSV datasets.

Layout of a campaign directory for one workload::

    train.csv              clean runs only (stream TRAIN)
    test_pct<p>.csv        n_test/2 clean (TEST_CLEAN) + n_test/2 attack (TEST_ATTACK)
    calib_pct<p>.csv       small labelled set for feature ranking (RANK_CLEAN / RANK_ATTACK)
    metadata.txt           key = value lines, see METADATA_KEYS
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__, seeding
from .config import ConfigError, format_config, load_config
from .emulator import DEFAULT_STEP_LIMIT, HPC_FIELDS, ExitStatus, HpcVector, run
from .workloads import (WORKLOADS, PayloadParams, build_workload, calibrate, craft_attack_input,
                        gen_clean_input, measure_baseline, payload_cost, workload_spec)

log = logging.getLogger(__name__)

CLEAN, ATTACK = "clean", "attack"
CSV_HEADER = ("workload", "run_index", "seed", "label", "payload_pct", *HPC_FIELDS,
              "exit_status", "payload_executed")
DEFAULT_PCTS = (0.5, 1.0, 2.0, 5.0)
PAPER_SCALE = 10_000

METADATA_KEYS = {
    "version": "package version that wrote the campaign",
    "workload": "workload name",
    "master_seed": "master seed fed to the split function",
    "n_train_clean": "clean training runs",
    "n_test": "balanced test runs per payload percentage",
    "n_calib": "balanced ranking-calibration runs per payload percentage",
    "payload_pcts": "comma-separated payload percentages",
    "compress": "whether the compressed encoding was used",
    "step_limit": "per-run instruction budget",
    "baseline_instret": "median clean instr_executed over the calibration stream",
    "k_pct<p>": "payload iteration count chosen for percentage p",
    "payload_instret_pct<p>": "instructions the payload retires at that k",
    "achieved_share_pct<p>": "payload_instret / baseline_instret * 100",
    "calibration_warning_pct<p>": "present when p is below the payload's minimum cost",
    "train_limit_exceeded": "training runs that hit the step limit",
    "train_instr_mean": "mean instr_executed of the training runs",
    "train_instr_std": "standard deviation of instr_executed of the training runs",
}


class DatasetError(ValueError):
    """Malformed or invariant-violating dataset file."""


class CampaignError(RuntimeError):
    """A run broke the label-soundness invariant; the exploit or generator is broken."""


def pct_tag(pct: float) -> str:
    return f"{float(pct):g}"


@dataclass(frozen=True)
class RunRecord:
    workload: str
    run_index: int
    seed: int
    label: str
    payload_pct: float
    hpc: HpcVector
    exit_status: ExitStatus
    payload_executed: bool

    def soundness_errors(self) -> list[str]:
        errs = []
        if self.label not in (CLEAN, ATTACK):
            errs.append(f"label {self.label!r} is not clean/attack")
        if (self.label == ATTACK) != self.payload_executed:
            errs.append(f"label={self.label} but payload_executed={self.payload_executed}")
        if (self.payload_pct > 0) != (self.label == ATTACK):
            errs.append(f"label={self.label} with payload_pct={self.payload_pct:g}")
        return errs

    def row(self) -> list[str]:
        return [self.workload, str(self.run_index), str(self.seed), self.label, pct_tag(self.payload_pct),
                *(str(v) for v in self.hpc.as_tuple()), self.exit_status.value,
                "true" if self.payload_executed else "false"]


@dataclass(frozen=True)
class CampaignConfig:
    workload: str
    n_train_clean: int = 2000
    n_test: int = 2000
    n_calib: int = 200
    payload_pcts: tuple[float, ...] = DEFAULT_PCTS
    master_seed: int = 0
    compress: bool = False
    step_limit: int = DEFAULT_STEP_LIMIT
    out_dir: Path = field(default_factory=lambda: Path("campaign"))

    def __post_init__(self):
        if self.workload not in WORKLOADS:
            raise ValueError(f"unknown workload {self.workload!r}; expected one of {', '.join(WORKLOADS)}")
        if self.n_train_clean < 1:
            raise ValueError("n_train_clean must be positive")
        for name in ("n_test", "n_calib"):
            v = getattr(self, name)
            if v < 0 or v % 2:
                raise ValueError(f"{name} must be a non-negative even count (balanced set), got {v}")
        if not self.payload_pcts or any(p <= 0 for p in self.payload_pcts):
            raise ValueError("payload_pcts must be a non-empty list of positive percentages")
        if len({pct_tag(p) for p in self.payload_pcts}) != len(self.payload_pcts):
            raise ValueError("payload_pcts contains duplicates")
        if not 0 <= self.master_seed < 1 << 64:
            raise ValueError("master_seed must fit in 64 bits")
        if self.step_limit < 1:
            raise ValueError("step_limit must be positive")


# ---------------------------------------------------------------------------
# CSV persistence

def _parse_row(cells: list[str], lineno: int) -> RunRecord:
    if len(cells) != len(CSV_HEADER):
        raise DatasetError(f"line {lineno}: expected {len(CSV_HEADER)} fields, got {len(cells)}")
    d = dict(zip(CSV_HEADER, cells))
    try:
        hpc = HpcVector(*(int(d[f]) for f in HPC_FIELDS))
        if d["payload_executed"] not in ("true", "false"):
            raise ValueError(f"payload_executed must be true/false, got {d['payload_executed']!r}")
        rec = RunRecord(d["workload"], int(d["run_index"]), int(d["seed"]), d["label"],
                        float(d["payload_pct"]), hpc, ExitStatus(d["exit_status"]),
                        d["payload_executed"] == "true")
    except ValueError as exc:
        raise DatasetError(f"line {lineno}: {exc}") from exc
    bad = hpc.violations()
    if bad:
        raise DatasetError(f"line {lineno}: counter invariant violated ({'; '.join(bad)})")
    if rec.label not in (CLEAN, ATTACK):
        raise DatasetError(f"line {lineno}: label must be clean or attack, got {rec.label!r}")
    return rec


def loads_dataset(text: str, source: str = "<string>") -> list[RunRecord]:
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError(f"{source}: empty file") from None
    if tuple(header) != CSV_HEADER:
        unknown = [h for h in header if h not in CSV_HEADER]
        detail = f"unknown column(s) {', '.join(unknown)}" if unknown else "columns missing or out of order"
        raise DatasetError(f"{source}: line 1: bad header ({detail}); expected {','.join(CSV_HEADER)}")
    out = []
    for cells in reader:
        if not cells:
            continue
        try:
            out.append(_parse_row(cells, reader.line_num))
        except DatasetError as exc:
            raise DatasetError(f"{source}: {exc}") from None
    return out


def load_dataset(path) -> list[RunRecord]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {p}: {exc.strerror or exc}") from exc
    return loads_dataset(text, str(p))


def dumps_dataset(records: Iterable[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def save_dataset(records: Iterable[RunRecord], path) -> None:
    Path(path).write_text(dumps_dataset(records), encoding="utf-8", newline="")


def feature_matrix(records: Sequence[RunRecord]) -> np.ndarray:
    return np.array([r.hpc.as_tuple() for r in records], dtype=np.float64).reshape(len(records), len(HPC_FIELDS))


def labels(records: Sequence[RunRecord]) -> list[str]:
    return [r.label for r in records]


# ---------------------------------------------------------------------------
# execution

@dataclass(frozen=True)
class _Job:
    workload: str
    compress: bool
    step_limit: int
    master_seed: int
    stream: int
    run_index: int
    params: PayloadParams | None  # None for clean runs


def _execute(job: _Job) -> RunRecord:
    spec = workload_spec(job.workload)
    program = build_workload(job.workload, job.compress)
    seed = seeding.split(job.master_seed, job.stream, job.run_index)
    if job.params is None:
        data, label, pct = gen_clean_input(spec, seed), CLEAN, 0.0
    else:
        data, label, pct = craft_attack_input(spec, program, job.params, seed), ATTACK, job.params.pct
    res = run(program, data, job.step_limit)
    bad = res.hpc.violations()
    if bad:
        raise CampaignError(f"{job.workload} run {job.run_index}: counter invariant violated: {'; '.join(bad)}")
    return RunRecord(job.workload, job.run_index, seed, label, float(pct), res.hpc, res.exit_status,
                     res.payload_executed)


def _execute_chunk(jobs: list[_Job]) -> list[RunRecord]:
    return [_execute(j) for j in jobs]


def execute(jobs: list[_Job], n_jobs: int = 1, chunk: int = 250) -> list[RunRecord]:
    """Run jobs, serially or on a process pool; results keep the input order."""
    if n_jobs <= 1 or len(jobs) <= chunk:
        return _execute_chunk(jobs)
    chunks = [jobs[i:i + chunk] for i in range(0, len(jobs), chunk)]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return [r for part in pool.map(_execute_chunk, chunks) for r in part]


def _check_sound(records: list[RunRecord], what: str) -> None:
    for r in records:
        errs = r.soundness_errors()
        if errs:
            raise CampaignError(f"{what}: run {r.run_index} (seed {r.seed}): {'; '.join(errs)}; "
                                "the exploit or input generator is broken")


def _balanced_jobs(cfg: CampaignConfig, n: int, clean_stream: int, attack_stream: int,
                   params: PayloadParams) -> list[_Job]:
    half = n // 2
    base = (cfg.workload, cfg.compress, cfg.step_limit, cfg.master_seed)
    return ([_Job(*base, clean_stream, i, None) for i in range(half)]
            + [_Job(*base, attack_stream, half + i, params) for i in range(half)])


@dataclass(frozen=True)
class CampaignResult:
    out_dir: Path
    train: list[RunRecord]
    tests: dict[str, list[RunRecord]]
    calibs: dict[str, list[RunRecord]]
    params: dict[str, PayloadParams]
    metadata: dict[str, str]


def run_campaign(cfg: CampaignConfig, n_jobs: int = 1) -> CampaignResult:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = workload_spec(cfg.workload)
    program = build_workload(cfg.workload, cfg.compress)
    baseline = measure_baseline(spec, program, seed=cfg.master_seed, step_limit=cfg.step_limit)
    log.info("%s: baseline %.0f instructions", cfg.workload, baseline)

    meta: dict[str, str] = {
        "version": __version__, "workload": cfg.workload, "master_seed": str(cfg.master_seed),
        "n_train_clean": str(cfg.n_train_clean), "n_test": str(cfg.n_test), "n_calib": str(cfg.n_calib),
        "payload_pcts": ",".join(pct_tag(p) for p in cfg.payload_pcts),
        "compress": str(cfg.compress).lower(), "step_limit": str(cfg.step_limit),
        "baseline_instret": f"{baseline:g}",
    }

    base = (cfg.workload, cfg.compress, cfg.step_limit, cfg.master_seed)
    train = execute([_Job(*base, seeding.TRAIN, i, None) for i in range(cfg.n_train_clean)], n_jobs)
    _check_sound(train, "train")
    save_dataset(train, out / "train.csv")

    tests, calibs, params = {}, {}, {}
    for pct in cfg.payload_pcts:
        tag = pct_tag(pct)
        par = calibrate(spec, program, pct, seed=cfg.master_seed, baseline=baseline, step_limit=cfg.step_limit)
        params[tag] = par
        cost = payload_cost(spec, program, par.k, cfg.master_seed, cfg.step_limit)
        meta[f"k_pct{tag}"] = str(par.k)
        meta[f"payload_instret_pct{tag}"] = f"{cost:g}"
        meta[f"achieved_share_pct{tag}"] = f"{100.0 * cost / baseline:.6g}"
        if par.warning:
            meta[f"calibration_warning_pct{tag}"] = par.warning
        test = execute(_balanced_jobs(cfg, cfg.n_test, seeding.TEST_CLEAN, seeding.TEST_ATTACK, par), n_jobs)
        _check_sound(test, f"test_pct{tag}")
        save_dataset(test, out / f"test_pct{tag}.csv")
        tests[tag] = test
        calib = execute(_balanced_jobs(cfg, cfg.n_calib, seeding.RANK_CLEAN, seeding.RANK_ATTACK, par), n_jobs)
        _check_sound(calib, f"calib_pct{tag}")
        save_dataset(calib, out / f"calib_pct{tag}.csv")
        calibs[tag] = calib

    instr = feature_matrix(train)[:, 0]
    meta["train_limit_exceeded"] = str(sum(r.exit_status is ExitStatus.LIMIT_EXCEEDED for r in train))
    meta["train_instr_mean"] = f"{instr.mean():.6g}"
    meta["train_instr_std"] = f"{instr.std():.6g}"
    write_metadata(meta, out / "metadata.txt")
    return CampaignResult(out, train, tests, calibs, params, meta)


def write_metadata(meta: dict[str, str], path) -> None:
    Path(path).write_text(format_config(meta), encoding="utf-8")


def read_metadata(path) -> dict[str, str]:
    try:
        return load_config(path)
    except ConfigError as exc:
        raise DatasetError(str(exc)) from exc
