import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpcsbo.emulator import HPC_FIELDS, Event, ExitStatus, HpcVector, MachineState, run, run_reference, step
from hpcsbo.isa import INPUT_CAPACITY, assemble
from hpcsbo.workloads import WORKLOADS, build_workload, gen_clean_input, workload_spec

# Hand-traced counter vectors, in HPC_FIELDS order:
# instr, load_hazards, loads, stores, jumps, branches_total, branches_taken, compressed
GOLDEN = {
    "countdown": ("""
        li a0, 0
        addi t0, x0, 3
    loop:
        addi t0, t0, -1
        bnez t0, loop
        ecall
    """, False, (9, 0, 0, 0, 0, 3, 2, 0), 0, ExitStatus.CLEAN_EXIT),
    # sw/lw/use: the addi right after lw t2 and the sw storing a0 right after lw a0 stall
    "hazards": ("""
        la t0, buf
        li t1, 5
        sw t1, 0(t0)
        lw t2, 0(t0)
        addi t3, t2, 1
        lw t4, 0(t0)
        addi t5, t0, 4
        sw t4, 0(t5)
        lw a0, 0(t5)
        sw a0, 4(t0)
        ecall
    .data
    buf:
        .space 16
    """, False, (12, 2, 3, 3, 0, 0, 0, 0), 5, ExitStatus.CLEAN_EXIT),
    "calls": ("""
    _start:
        li a0, 0
        call f
        call f
        ecall
    f:
        addi a0, a0, 2
        ret
    """, False, (8, 0, 0, 0, 4, 0, 0, 0), 4, ExitStatus.CLEAN_EXIT),
    # c.li, c.addi and c.bnez (s0 is x8); ecall stays 4 bytes
    "compressed": ("""
        li s0, 3
    loop:
        addi s0, s0, -1
        bnez s0, loop
        li a0, 0
        ecall
    """, True, (9, 0, 0, 0, 0, 3, 2, 8), 0, ExitStatus.CLEAN_EXIT),
    # a load into x0 never causes a stall
    "x0_load": ("""
        la t0, val
        lw t1, 0(t0)
        beq t1, x0, skip
        lw x0, 0(t0)
        add t2, x0, x0
    skip:
        lw t3, 4(t0)
        bnez t3, end
        mv a0, t1
    end:
        ecall
    .data
    val:
        .word 7, 0
    """, False, (10, 2, 3, 0, 0, 2, 0, 0), 7, ExitStatus.CLEAN_EXIT),
    # the jalr retires, then control lands outside the text
    "wild_jump": ("""
        li t0, 0x40
        jalr x0, 0(t0)
        ecall
    """, False, (2, 0, 0, 0, 1, 0, 0, 0), None, ExitStatus.MEMORY_FAULT),
    "byte_sign": ("""
        la t0, b
        lb t1, 0(t0)
        lbu t2, 0(t0)
        sub a0, t2, t1
        ecall
    .data
    b:
        .byte 0xF0
    """, False, (6, 1, 2, 0, 0, 0, 0, 0), 256, ExitStatus.CLEAN_EXIT),
}


@pytest.mark.parametrize("name", sorted(GOLDEN))
@pytest.mark.parametrize("runner", ["fast", "reference"])
def test_golden_trace(name, runner):
    src, compress, expect, exit_code, status = GOLDEN[name]
    prog = assemble(src, compress)
    res = run(prog) if runner == "fast" else run_reference(prog)[0]
    assert res.hpc.as_tuple() == expect
    assert res.exit_status is status
    if exit_code is not None:
        assert res.exit_code == exit_code


def test_step_limit_recorded():
    prog = assemble("loop:\n  j loop\n")
    for res in (run(prog, step_limit=100), run_reference(prog, step_limit=100)[0]):
        assert res.exit_status is ExitStatus.LIMIT_EXCEEDED
        assert res.hpc.instr_executed == 100
        assert res.hpc.jumps == 100


def test_out_of_range_load_faults_without_retiring():
    prog = assemble("li t0, -4\nlw t1, 0(t0)\necall")
    res = run(prog)
    assert res.exit_status is ExitStatus.MEMORY_FAULT
    assert res.hpc.instr_executed == 1 and res.hpc.loads == 0


def test_step_events_and_halt():
    prog = assemble("addi a0, x0, 1\necall")
    st_ = MachineState.boot(prog)
    assert step(st_, prog) == Event.INSTR
    step(st_, prog)
    assert st_.halted and st_.exit_code == 1
    with pytest.raises(RuntimeError):
        step(st_, prog)


def test_oversized_input_rejected():
    prog = assemble("ecall")
    with pytest.raises(ValueError):
        run(prog, bytes(INPUT_CAPACITY + 1))


def test_hpcvector_bounds():
    with pytest.raises(ValueError):
        HpcVector(instr_executed=-1)
    assert HpcVector(instr_executed=1, branches_total=2).violations() == ["branches_total <= instr_executed"]


# ---------------------------------------------------------------------------
# random safe programs: memory traffic confined to a scratch block addressed
# through s0, control flow forward-only, so every program terminates

SCRATCH_WORDS = 64
WRITABLE = [r for r in range(1, 32) if r not in (2, 8)]


def random_program(rng: np.random.Generator, n: int) -> str:
    lines = ["_start:", "    la s0, scratch"]
    for i in range(n):
        lines.append(f"L{i}:")
        kind = rng.integers(0, 9)
        rd = int(rng.choice(WRITABLE))
        a, b = (int(x) for x in rng.integers(0, 32, 2))
        if kind == 0:
            op = rng.choice(["add", "sub", "xor", "or", "and", "sll", "srl", "sra", "slt", "sltu"])
            lines.append(f"    {op} x{rd}, x{a}, x{b}")
        elif kind == 1:
            op = rng.choice(["addi", "xori", "ori", "andi", "slti", "sltiu"])
            lines.append(f"    {op} x{rd}, x{a}, {int(rng.integers(-2048, 2048))}")
        elif kind == 2:
            op = rng.choice(["slli", "srli", "srai"])
            lines.append(f"    {op} x{rd}, x{a}, {int(rng.integers(0, 32))}")
        elif kind == 3:
            op, size = [("lw", 4), ("lh", 2), ("lhu", 2), ("lb", 1), ("lbu", 1)][rng.integers(0, 5)]
            off = int(rng.integers(0, 4 * SCRATCH_WORDS // size)) * size
            lines.append(f"    {op} x{rd}, {off}(s0)")
        elif kind == 4:
            op, size = [("sw", 4), ("sh", 2), ("sb", 1)][rng.integers(0, 3)]
            off = int(rng.integers(0, 4 * SCRATCH_WORDS // size)) * size
            lines.append(f"    {op} x{a}, {off}(s0)")
        elif kind == 5:
            op = rng.choice(["beq", "bne", "blt", "bge", "bltu", "bgeu"])
            lines.append(f"    {op} x{a}, x{b}, L{int(rng.integers(i + 1, n + 1))}")
        elif kind == 6:
            lines.append(f"    jal x{rng.choice([0, 1, rd])}, L{int(rng.integers(i + 1, n + 1))}")
        elif kind == 7:
            lines.append(f"    li x{rd}, {int(rng.integers(-(1 << 31), 1 << 31))}")
        else:
            lines.append(f"    mv x{rd}, x{a}")
    lines += [f"L{n}:", "    ecall", ".data", "scratch:", f"    .space {4 * SCRATCH_WORDS}"]
    return "\n".join(lines) + "\n"


def test_invariants_over_10k_random_programs():
    rng = np.random.default_rng(2024)
    for _ in range(10_000):
        n = int(rng.integers(1, 40))
        src = random_program(rng, n)
        compress = bool(rng.integers(0, 2))
        prog = assemble(src, compress)
        res = run(prog, bytes(rng.integers(0, 256, int(rng.integers(0, 64)), dtype=np.uint8)))
        h = res.hpc
        assert res.exit_status is ExitStatus.CLEAN_EXIT, src
        assert h.violations() == [], src
        assert h.instr_executed == res.steps
        # forward-only control flow: nothing runs twice
        assert h.instr_executed <= len(prog.text)
        if not compress:
            assert h.compressed == 0


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.booleans(), st.binary(max_size=64))
def test_fast_matches_reference(seed, n, compress, data):
    prog = assemble(random_program(np.random.default_rng(seed), n), compress)
    fast = run(prog, data)
    ref, state = run_reference(prog, data)
    assert fast == ref
    assert state.exit_code == fast.exit_code


@pytest.mark.parametrize("name", WORKLOADS)
def test_fast_matches_reference_on_workloads(name):
    spec = workload_spec(name)
    prog = build_workload(name)
    for seed in range(3):
        data = gen_clean_input(spec, seed)
        assert run(prog, data) == run_reference(prog, data)[0]


@pytest.mark.parametrize("name", WORKLOADS)
def test_compression_soundness(name):
    spec = workload_spec(name)
    plain, packed = build_workload(name, False), build_workload(name, True)
    for seed in range(25):
        data = gen_clean_input(spec, seed)
        a, b = run(plain, data), run(packed, data)
        assert a.exit_code == b.exit_code
        assert a.exit_status is b.exit_status
        ha, hb = a.hpc.as_tuple(), b.hpc.as_tuple()
        for f, x, y in zip(HPC_FIELDS, ha, hb):
            if f != "compressed":
                assert x == y, f
        assert b.hpc.compressed > 0 and a.hpc.compressed == 0


def test_run_is_deterministic():
    prog = build_workload("rsa_full")
    data = gen_clean_input(workload_spec("rsa_full"), 11)
    assert run(prog, data) == run(prog, data)
