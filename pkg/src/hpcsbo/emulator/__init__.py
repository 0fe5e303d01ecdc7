"""Single-hart RV32I-subset machine with end-of-run hardware event counters.

ABI at entry: a0 = input pointer (``INPUT_BASE``), a1 = input length,
sp = top of memory. ``ecall`` halts with the exit code in a0.
"""
from __future__ import annotations

import numpy as np

from ..isa import INPUT_BASE, INPUT_CAPACITY, MEM_SIZE, Program
from .core import (DEFAULT_STEP_LIMIT, HPC_FIELDS, Event, ExitStatus, HpcVector, MachineState,
                   RunResult, step)
from . import fast

__all__ = [
    "DEFAULT_STEP_LIMIT", "HPC_FIELDS", "Event", "ExitStatus", "HpcVector", "MachineState",
    "RunResult", "run", "run_reference", "run_with_state", "step",
]

_STATUS = {fast.CLEAN: ExitStatus.CLEAN_EXIT, fast.LIMIT: ExitStatus.LIMIT_EXCEEDED,
           fast.FAULT: ExitStatus.MEMORY_FAULT}


def _encoded(program: Program):
    enc = program.__dict__.get("_encoded")
    if enc is None:
        enc = fast.encode(program)
        object.__setattr__(program, "_encoded", enc)
    return enc


def _initial_image(program: Program, input_bytes: bytes, mem_size: int) -> np.ndarray:
    if mem_size < INPUT_BASE + INPUT_CAPACITY:
        raise ValueError(f"memory must be at least {INPUT_BASE + INPUT_CAPACITY:#x} bytes")
    if len(input_bytes) > INPUT_CAPACITY:
        raise ValueError(f"input of {len(input_bytes)} bytes exceeds the {INPUT_CAPACITY}-byte input region")
    mem = np.zeros(mem_size, dtype=np.uint8)
    if program.data:
        mem[program.data_base:program.data_base + len(program.data)] = np.frombuffer(program.data, np.uint8)
    if input_bytes:
        mem[INPUT_BASE:INPUT_BASE + len(input_bytes)] = np.frombuffer(bytes(input_bytes), np.uint8)
    return mem


def run_with_state(program: Program, input_bytes: bytes = b"", step_limit: int = DEFAULT_STEP_LIMIT,
                   mem_size: int = MEM_SIZE) -> tuple[RunResult, np.ndarray, np.ndarray]:
    """Like :func:`run` but also returns the final register file and memory image."""
    cols, idxmap = _encoded(program)
    mem = _initial_image(program, input_bytes, mem_size)
    regs = np.zeros(32, dtype=np.int64)
    regs[2] = mem_size & 0xFFFFFFFF
    regs[10] = INPUT_BASE
    regs[11] = len(input_bytes)
    lo, hi = program.payload_range or (-1, -1)
    cnt, status, exit_code, steps, entered, pay_steps = fast.run_kernel(
        cols, idxmap, program.entry, mem, regs, step_limit, lo, hi)
    result = RunResult(
        hpc=HpcVector(*(int(c) for c in cnt)),
        exit_status=_STATUS[int(status)],
        payload_executed=bool(entered),
        steps=int(steps),
        exit_code=int(exit_code),
        payload_steps=int(pay_steps),
    )
    return result, regs, mem


def run(program: Program, input_bytes: bytes = b"", step_limit: int = DEFAULT_STEP_LIMIT,
        mem_size: int = MEM_SIZE) -> RunResult:
    """Execute ``program`` on ``input_bytes`` and report the end-of-run counters."""
    return run_with_state(program, input_bytes, step_limit, mem_size)[0]


def run_reference(program: Program, input_bytes: bytes = b"", step_limit: int = DEFAULT_STEP_LIMIT,
                  mem_size: int = MEM_SIZE) -> tuple[RunResult, MachineState]:
    """Pure-Python run built on :func:`step`; slow, used to cross-check :func:`run`."""
    state = MachineState.boot(program, input_bytes, mem_size)
    counts = dict.fromkeys(HPC_FIELDS, 0)
    pairs = [
        (Event.INSTR, "instr_executed"), (Event.LOAD_HAZARD, "load_hazards"), (Event.LOAD, "loads"),
        (Event.STORE, "stores"), (Event.JUMP, "jumps"), (Event.BRANCH, "branches_total"),
        (Event.BRANCH_TAKEN, "branches_taken"), (Event.COMPRESSED, "compressed"),
    ]
    lo, hi = program.payload_range or (-1, -1)
    entered = False
    pay_steps = 0
    steps = 0
    if program.instruction_at(state.pc) is None:
        state.halted, state.status = True, ExitStatus.MEMORY_FAULT
    while not state.halted and steps < step_limit:
        in_payload = lo <= state.pc < hi
        ev = step(state, program)
        if Event.INSTR in ev:
            steps += 1
            if in_payload:
                entered = True
                pay_steps += 1
        for flag, name in pairs:
            if flag in ev:
                counts[name] += 1
    status = state.status if state.halted else ExitStatus.LIMIT_EXCEEDED
    result = RunResult(HpcVector(**counts), status, entered, steps, state.exit_code, pay_steps)
    return result, state
