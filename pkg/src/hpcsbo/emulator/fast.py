"""Compiled interpreter loop. Semantics mirror ``core.step`` exactly."""
from __future__ import annotations

import numpy as np
from numba import njit

from ..isa import (BRANCHES, I_ALU, LOADS, OPCODES, R_TYPE, SHIFT_IMM, STORES, TEXT_BASE,
                   Program)

OP = {name: i for i, name in enumerate(OPCODES)}

# status codes shared with run()
RUNNING, CLEAN, LIMIT, FAULT = 0, 1, 2, 3


def encode(program: Program) -> tuple[np.ndarray, ...]:
    """Flatten a Program into the column arrays the kernel consumes."""
    n = len(program.text)
    cols = np.zeros((8, n), dtype=np.int64)
    for i, ins in enumerate(program.text):
        op = ins.op
        reads1 = op in R_TYPE or op in BRANCHES or op in STORES or op in I_ALU \
            or op in SHIFT_IMM or op in LOADS or op == "jalr"
        reads2 = op in R_TYPE or op in BRANCHES or op in STORES
        cols[:, i] = (OP[op], ins.rd, ins.rs1, ins.rs2, ins.imm, ins.width, reads1, reads2)
    span = max(program.text_end - TEXT_BASE, 0) // 2 + 1
    idxmap = np.full(span, -1, dtype=np.int64)
    for i, ins in enumerate(program.text):
        idxmap[(ins.addr - TEXT_BASE) // 2] = i
    return cols, idxmap


def _op(name):
    return OP[name]


# numba resolves module-level ints as compile-time constants
ADD, SUB, SLL, SLT, SLTU, XOR, SRL, SRA, OR, AND = (_op(n) for n in R_TYPE)
ADDI, SLTI, SLTIU, XORI, ORI, ANDI = (_op(n) for n in I_ALU)
SLLI, SRLI, SRAI = (_op(n) for n in SHIFT_IMM)
LB, LH, LW, LBU, LHU = (_op(n) for n in LOADS)
SB, SH, SW = (_op(n) for n in STORES)
BEQ, BNE, BLT, BGE, BLTU, BGEU = (_op(n) for n in BRANCHES)
LUI, AUIPC, JAL, JALR, ECALL = _op("lui"), _op("auipc"), _op("jal"), _op("jalr"), _op("ecall")
M32 = 0xFFFFFFFF


@njit(cache=True, inline="always")
def _s32(v):
    return v - 0x100000000 if v & 0x80000000 else v


@njit(cache=True)
def run_kernel(cols, idxmap, entry, mem, regs, step_limit, pay_lo, pay_hi):
    """Returns (counters[8], status, exit_code, steps, payload_entered, payload_steps)."""
    ops = cols[0]
    rds = cols[1]
    rs1s = cols[2]
    rs2s = cols[3]
    imms = cols[4]
    widths = cols[5]
    r1 = cols[6]
    r2 = cols[7]
    memsize = mem.shape[0]
    nmap = idxmap.shape[0]
    cnt = np.zeros(8, dtype=np.int64)
    pc = entry
    last_load = -1
    status = RUNNING
    exit_code = 0
    steps = 0
    entered = False
    pay_steps = 0
    while True:
        off = pc - TEXT_BASE
        if off < 0 or off & 1 or (off >> 1) >= nmap:
            status = FAULT
            break
        i = idxmap[off >> 1]
        if i < 0:
            status = FAULT
            break
        if steps >= step_limit:
            status = LIMIT
            break
        in_pay = pc >= pay_lo and pc < pay_hi
        op = ops[i]
        rd = rds[i]
        a = regs[rs1s[i]]
        b = regs[rs2s[i]]
        imm = imms[i]
        w = widths[i]
        hazard = last_load >= 0 and ((r1[i] and rs1s[i] == last_load) or (r2[i] and rs2s[i] == last_load))
        next_pc = pc + w
        has_res = True
        res = 0
        load_rd = -1
        is_load = False
        is_store = False
        is_jump = False
        is_branch = False
        taken = False
        if op == ADDI:
            res = a + imm
        elif op == ADD:
            res = a + b
        elif op == SUB:
            res = a - b
        elif op == SLL:
            res = a << (b & 31)
        elif op == SLT:
            res = 1 if _s32(a) < _s32(b) else 0
        elif op == SLTU:
            res = 1 if a < b else 0
        elif op == XOR:
            res = a ^ b
        elif op == SRL:
            res = a >> (b & 31)
        elif op == SRA:
            res = _s32(a) >> (b & 31)
        elif op == OR:
            res = a | b
        elif op == AND:
            res = a & b
        elif op == SLTI:
            res = 1 if _s32(a) < imm else 0
        elif op == SLTIU:
            res = 1 if a < (imm & M32) else 0
        elif op == XORI:
            res = a ^ (imm & M32)
        elif op == ORI:
            res = a | (imm & M32)
        elif op == ANDI:
            res = a & (imm & M32)
        elif op == SLLI:
            res = a << imm
        elif op == SRLI:
            res = a >> imm
        elif op == SRAI:
            res = _s32(a) >> imm
        elif op == LB or op == LH or op == LW or op == LBU or op == LHU:
            addr = (a + imm) & M32
            size = 4 if op == LW else (2 if (op == LH or op == LHU) else 1)
            if addr + size > memsize:
                status = FAULT
                break
            v = 0
            for k in range(size):
                v |= np.int64(mem[addr + k]) << (8 * k)
            if op == LB and v & 0x80:
                v -= 0x100
            elif op == LH and v & 0x8000:
                v -= 0x10000
            res = v
            is_load = True
            if rd != 0:
                load_rd = rd
        elif op == SB or op == SH or op == SW:
            addr = (a + imm) & M32
            size = 4 if op == SW else (2 if op == SH else 1)
            if addr + size > memsize:
                status = FAULT
                break
            for k in range(size):
                mem[addr + k] = (b >> (8 * k)) & 0xFF
            is_store = True
            has_res = False
        elif op == BEQ or op == BNE or op == BLT or op == BGE or op == BLTU or op == BGEU:
            if op == BEQ:
                taken = a == b
            elif op == BNE:
                taken = a != b
            elif op == BLT:
                taken = _s32(a) < _s32(b)
            elif op == BGE:
                taken = _s32(a) >= _s32(b)
            elif op == BLTU:
                taken = a < b
            else:
                taken = a >= b
            is_branch = True
            if taken:
                next_pc = pc + imm
            has_res = False
        elif op == LUI:
            res = imm << 12
        elif op == AUIPC:
            res = pc + (imm << 12)
        elif op == JAL:
            res = pc + w
            next_pc = pc + imm
            is_jump = True
        elif op == JALR:
            res = pc + w
            next_pc = ((a + imm) & M32) & ~1
            is_jump = True
        else:  # ECALL
            has_res = False
            status = CLEAN
            exit_code = regs[10]
        if has_res and rd != 0:
            regs[rd] = res & M32
        last_load = load_rd
        steps += 1
        if in_pay:
            entered = True
            pay_steps += 1
        cnt[0] += 1
        if hazard:
            cnt[1] += 1
        if is_load:
            cnt[2] += 1
        if is_store:
            cnt[3] += 1
        if is_jump:
            cnt[4] += 1
        if is_branch:
            cnt[5] += 1
            if taken:
                cnt[6] += 1
        if w == 2:
            cnt[7] += 1
        if status != RUNNING:
            break
        pc = next_pc & M32
    return cnt, status, exit_code, steps, entered, pay_steps
