"""Benchmark programs with an injected stack buffer overflow, input generators
and payload-size calibration.

Every workload is ``common.s + <name>.s + payload.s``. ``_start`` runs the
benchmark, then hands the raw input to ``process_input``, which copies it
into a 64-byte stack buffer without a bounds check. The saved return address
sits 64 bytes above the buffer base; an attack input overwrites it with the
payload address and places the payload's iteration count k in the next word.
"""
from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources

import numpy as np

from .. import seeding
from ..emulator import DEFAULT_STEP_LIMIT, run
from ..isa import INPUT_CAPACITY, PAYLOAD_START, Program, assemble

log = logging.getLogger(__name__)

WORKLOADS = ("aes", "rsa_fixed", "rsa_full", "sha", "dijkstra")
BUFFER_SIZE = 64
SAVED_RA_OFFSET = 64
# payload reads k from this offset relative to sp after the frame is popped
K_STACK_OFFSET = -12


@dataclass(frozen=True)
class WorkloadSpec:
    name: str
    buffer_size: int = BUFFER_SIZE
    saved_ra_offset: int = SAVED_RA_OFFSET
    clean_len_range: tuple[int, int] = (1, 64)
    baseline_instret: float | None = None

    def __post_init__(self):
        if self.name not in WORKLOADS:
            raise ValueError(f"unknown workload {self.name!r}; expected one of {', '.join(WORKLOADS)}")
        lo, hi = self.clean_len_range
        if not 0 <= lo <= hi <= self.buffer_size:
            raise ValueError("clean_len_range must lie within [0, buffer_size]")
        if self.saved_ra_offset < self.buffer_size:
            raise ValueError("saved_ra_offset must be >= buffer_size")


@dataclass(frozen=True)
class PayloadParams:
    k: int
    pct: float
    instr_per_iter: float
    overhead: float
    baseline_instret: float
    warning: str | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.instr_per_iter <= 0:
            raise ValueError("instr_per_iter must be positive")

    def predicted_instret(self) -> float:
        return self.instr_per_iter * self.k + self.overhead


def workload_spec(name: str) -> WorkloadSpec:
    return WorkloadSpec(name)


def source(name: str) -> str:
    """Full assembly source of a workload."""
    if name not in WORKLOADS:
        raise ValueError(f"unknown workload {name!r}")
    pkg = resources.files(__package__)
    parts = [pkg.joinpath(f).read_text(encoding="utf-8") for f in ("common.s", f"{name}.s", "payload.s")]
    return "\n".join(parts)


@lru_cache(maxsize=None)
def build_workload(name: str, compress: bool = False) -> Program:
    return assemble(source(name), compress=compress)


def gen_clean_input(spec: WorkloadSpec, seed: int) -> bytes:
    """Random-length, random-valued input that never reaches the saved return address."""
    rng = np.random.default_rng(seed)
    lo, hi = spec.clean_len_range
    n = int(rng.integers(lo, hi + 1))
    return rng.integers(0, 256, size=n, dtype=np.uint8).tobytes()


def craft_attack_input(spec: WorkloadSpec, program: Program, params: PayloadParams | int,
                       seed: int) -> bytes:
    """[random padding][payload address, LE][k, LE]."""
    k = params if isinstance(params, int) else params.k
    if k < 1:
        raise ValueError("k must be >= 1")
    if program.payload_range is None:
        raise ValueError("program has no payload")
    total = spec.saved_ra_offset + 8
    if total > INPUT_CAPACITY:
        raise ValueError(f"attack layout needs {total} bytes, input region holds {INPUT_CAPACITY}")
    rng = np.random.default_rng(seed)
    pad = rng.integers(0, 256, size=spec.saved_ra_offset, dtype=np.uint8).tobytes()
    entry = program.symbols[PAYLOAD_START]
    return pad + entry.to_bytes(4, "little") + (k & 0xFFFFFFFF).to_bytes(4, "little")


def measure_baseline(spec: WorkloadSpec, program: Program, n_runs: int = 200, seed: int = 0,
                     step_limit: int = DEFAULT_STEP_LIMIT) -> float:
    """Median clean-run instr_executed over ``n_runs`` seeded inputs."""
    counts = []
    for i in range(n_runs):
        data = gen_clean_input(spec, seeding.split(seed, seeding.CALIBRATION, i))
        counts.append(run(program, data, step_limit).hpc.instr_executed)
    return float(statistics.median(counts))


def payload_cost(spec: WorkloadSpec, program: Program, k: int, seed: int = 0,
                 step_limit: int = DEFAULT_STEP_LIMIT) -> int:
    """Instructions retired inside the payload for iteration count ``k``."""
    data = craft_attack_input(spec, program, k, seeding.split(seed, seeding.CALIBRATION, 1 << 32))
    res = run(program, data, step_limit)
    if not res.payload_executed:
        raise RuntimeError(f"{spec.name}: crafted input did not reach the payload ({res.exit_status.value})")
    return res.payload_steps


def calibrate(spec: WorkloadSpec, program: Program, pct: float, *, seed: int = 0,
              baseline: float | None = None, n_baseline: int = 200,
              step_limit: int = DEFAULT_STEP_LIMIT) -> PayloadParams:
    """Choose k so the payload costs ``pct`` percent of the median clean run."""
    if pct <= 0:
        raise ValueError("pct must be positive")
    if baseline is None:
        baseline = spec.baseline_instret
    if baseline is None:
        baseline = measure_baseline(spec, program, n_baseline, seed, step_limit)
    k1, k2 = 1, 101
    c1 = payload_cost(spec, program, k1, seed, step_limit)
    c2 = payload_cost(spec, program, k2, seed, step_limit)
    a = (c2 - c1) / (k2 - k1)
    b = c1 - a * k1
    target = pct / 100.0 * baseline
    k = max(1, round((target - b) / a))
    warning = None
    if a * k + b > 3 * target:
        warning = (f"{spec.name}: pct={pct} is below the payload's minimum cost; "
                   f"k=1 costs {a + b:.0f} instructions against a target of {target:.1f}")
        log.warning(warning)
    return PayloadParams(k=k, pct=pct, instr_per_iter=a, overhead=b, baseline_instret=baseline,
                         warning=warning)


def with_baseline(spec: WorkloadSpec, program: Program, **kw) -> WorkloadSpec:
    return replace(spec, baseline_instret=measure_baseline(spec, program, **kw))
