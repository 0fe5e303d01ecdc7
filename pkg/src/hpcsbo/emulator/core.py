"""Machine model, event counters and the reference single-step interpreter."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields

from ..isa import (BRANCHES, I_ALU, INPUT_BASE, INPUT_CAPACITY, LOADS, MEM_SIZE, R_TYPE,
                   SHIFT_IMM, STORES, Program)

MASK = 0xFFFFFFFF
DEFAULT_STEP_LIMIT = 5_000_000

HPC_FIELDS = ("instr_executed", "load_hazards", "loads", "stores", "jumps",
              "branches_total", "branches_taken", "compressed")


class Event(enum.Flag):
    NONE = 0
    INSTR = enum.auto()
    LOAD = enum.auto()
    STORE = enum.auto()
    JUMP = enum.auto()
    BRANCH = enum.auto()
    BRANCH_TAKEN = enum.auto()
    COMPRESSED = enum.auto()
    LOAD_HAZARD = enum.auto()


class ExitStatus(str, enum.Enum):
    CLEAN_EXIT = "clean_exit"
    LIMIT_EXCEEDED = "limit_exceeded"
    MEMORY_FAULT = "memory_fault"


@dataclass(frozen=True)
class HpcVector:
    instr_executed: int = 0
    load_hazards: int = 0
    loads: int = 0
    stores: int = 0
    jumps: int = 0
    branches_total: int = 0
    branches_taken: int = 0
    compressed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not 0 <= v < (1 << 64):
                raise ValueError(f"{f.name}={v} is not a non-negative 64-bit count")

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(getattr(self, name) for name in HPC_FIELDS)

    def violations(self) -> list[str]:
        """Names of the counter invariants this vector breaks (empty when sound)."""
        bad = []
        if self.branches_taken > self.branches_total:
            bad.append("branches_taken <= branches_total")
        if self.branches_total > self.instr_executed:
            bad.append("branches_total <= instr_executed")
        if self.loads + self.stores > self.instr_executed:
            bad.append("loads + stores <= instr_executed")
        if self.jumps > self.instr_executed:
            bad.append("jumps <= instr_executed")
        if self.compressed > self.instr_executed:
            bad.append("compressed <= instr_executed")
        if self.load_hazards > self.loads:
            bad.append("load_hazards <= loads")
        return bad


@dataclass(frozen=True)
class RunResult:
    hpc: HpcVector
    exit_status: ExitStatus
    payload_executed: bool
    steps: int
    exit_code: int = 0
    # instructions retired with pc inside the payload range
    payload_steps: int = 0


@dataclass
class MachineState:
    pc: int
    regs: list[int] = field(default_factory=lambda: [0] * 32)
    mem: bytearray = field(default_factory=lambda: bytearray(MEM_SIZE))
    halted: bool = False
    exit_code: int = 0
    last_load_rd: int | None = None
    status: ExitStatus | None = None

    @classmethod
    def boot(cls, program: Program, input_bytes: bytes = b"", mem_size: int = MEM_SIZE) -> "MachineState":
        """Load the data image and input, and set up the entry ABI registers."""
        if mem_size < INPUT_BASE + INPUT_CAPACITY:
            raise ValueError(f"memory must be at least {INPUT_BASE + INPUT_CAPACITY:#x} bytes")
        if len(input_bytes) > INPUT_CAPACITY:
            raise ValueError(f"input of {len(input_bytes)} bytes exceeds the {INPUT_CAPACITY}-byte input region")
        mem = bytearray(mem_size)
        mem[program.data_base:program.data_base + len(program.data)] = program.data
        mem[INPUT_BASE:INPUT_BASE + len(input_bytes)] = input_bytes
        st = cls(pc=program.entry, mem=mem)
        st.regs[2] = mem_size & MASK
        st.regs[10] = INPUT_BASE
        st.regs[11] = len(input_bytes)
        return st


def _signed(v: int) -> int:
    return v - (1 << 32) if v & 0x80000000 else v


def _sources(ins) -> tuple[int, ...]:
    op = ins.op
    if op in R_TYPE or op in BRANCHES or op in STORES:
        return (ins.rs1, ins.rs2)
    if op in I_ALU or op in SHIFT_IMM or op in LOADS or op == "jalr":
        return (ins.rs1,)
    return ()


def _fault(state: MachineState) -> Event:
    state.halted = True
    state.status = ExitStatus.MEMORY_FAULT
    return Event.NONE


def step(state: MachineState, program: Program) -> Event:
    """Execute one instruction and return the events it raised.

    A faulting instruction halts the machine with MEMORY_FAULT and raises no
    events (it does not retire). A jump to an address holding no instruction
    retires normally; the fault is raised by the fetch on the following step.
    """
    if state.halted:
        raise RuntimeError("machine is halted")
    ins = program.instruction_at(state.pc)
    if ins is None:
        return _fault(state)
    regs = state.regs
    mem = state.mem
    op = ins.op
    a = regs[ins.rs1]
    b = regs[ins.rs2]
    ev = Event.INSTR
    if ins.width == 2:
        ev |= Event.COMPRESSED
    if state.last_load_rd is not None and state.last_load_rd in _sources(ins):
        ev |= Event.LOAD_HAZARD
    next_pc = state.pc + ins.width
    result = None
    load_rd = None

    if op in R_TYPE:
        if op == "add":
            result = a + b
        elif op == "sub":
            result = a - b
        elif op == "sll":
            result = a << (b & 31)
        elif op == "slt":
            result = int(_signed(a) < _signed(b))
        elif op == "sltu":
            result = int(a < b)
        elif op == "xor":
            result = a ^ b
        elif op == "srl":
            result = a >> (b & 31)
        elif op == "sra":
            result = _signed(a) >> (b & 31)
        elif op == "or":
            result = a | b
        else:
            result = a & b
    elif op in I_ALU:
        imm = ins.imm
        if op == "addi":
            result = a + imm
        elif op == "slti":
            result = int(_signed(a) < imm)
        elif op == "sltiu":
            result = int(a < (imm & MASK))
        elif op == "xori":
            result = a ^ (imm & MASK)
        elif op == "ori":
            result = a | (imm & MASK)
        else:
            result = a & (imm & MASK)
    elif op in SHIFT_IMM:
        if op == "slli":
            result = a << ins.imm
        elif op == "srli":
            result = a >> ins.imm
        else:
            result = _signed(a) >> ins.imm
    elif op in LOADS:
        addr = (a + ins.imm) & MASK
        size = {"lb": 1, "lbu": 1, "lh": 2, "lhu": 2, "lw": 4}[op]
        if addr + size > len(mem):
            return _fault(state)
        raw = int.from_bytes(mem[addr:addr + size], "little")
        if op == "lb" and raw & 0x80:
            raw -= 0x100
        elif op == "lh" and raw & 0x8000:
            raw -= 0x10000
        result = raw
        ev |= Event.LOAD
        if ins.rd != 0:
            load_rd = ins.rd
    elif op in STORES:
        addr = (a + ins.imm) & MASK
        size = {"sb": 1, "sh": 2, "sw": 4}[op]
        if addr + size > len(mem):
            return _fault(state)
        mem[addr:addr + size] = (b & ((1 << (8 * size)) - 1)).to_bytes(size, "little")
        ev |= Event.STORE
    elif op in BRANCHES:
        if op == "beq":
            taken = a == b
        elif op == "bne":
            taken = a != b
        elif op == "blt":
            taken = _signed(a) < _signed(b)
        elif op == "bge":
            taken = _signed(a) >= _signed(b)
        elif op == "bltu":
            taken = a < b
        else:
            taken = a >= b
        ev |= Event.BRANCH
        if taken:
            ev |= Event.BRANCH_TAKEN
            next_pc = state.pc + ins.imm
    elif op == "lui":
        result = ins.imm << 12
    elif op == "auipc":
        result = state.pc + (ins.imm << 12)
    elif op == "jal":
        result = state.pc + ins.width
        next_pc = state.pc + ins.imm
        ev |= Event.JUMP
    elif op == "jalr":
        result = state.pc + ins.width
        next_pc = ((a + ins.imm) & MASK) & ~1
        ev |= Event.JUMP
    else:  # ecall
        state.halted = True
        state.status = ExitStatus.CLEAN_EXIT
        state.exit_code = regs[10]

    if result is not None and ins.rd != 0:
        regs[ins.rd] = result & MASK
    state.last_load_rd = load_rd
    if not state.halted:
        state.pc = next_pc & MASK
        if program.instruction_at(state.pc) is None:
            # the instruction retired, but control left the text (wild return)
            state.halted = True
            state.status = ExitStatus.MEMORY_FAULT
    return ev
