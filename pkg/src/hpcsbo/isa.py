"""RV32I subset: instruction model, two-pass assembler and disassembler.

Programs are kept as decoded instructions (no machine-code encoding). The
memory map shared with the emulator is fixed:

    TEXT_BASE   0x1000   code (instructions are not stored in memory)
    DATA_BASE   0x8000   .data segment image
    INPUT_BASE  0xE000   4 KiB input region (a0 = INPUT_BASE, a1 = length)
    stack top   end of memory (64 KiB by default), grows down

Pseudo-op expansion table (normative, it fixes instruction counts):

    nop              addi x0, x0, 0
    mv   rd, rs      addi rd, rs, 0
    li   rd, imm     addi rd, x0, imm               if -2048 <= imm <= 2047
                     lui rd, hi ; addi rd, rd, lo   otherwise (always two)
    la   rd, sym     lui rd, hi ; addi rd, rd, lo   (always two)
    j    off         jal x0, off
    call off         jal ra, off
    ret              jalr x0, 0(ra)
    beqz rs, off     beq rs, x0, off
    bnez rs, off     bne rs, x0, off

Numeric branch/jump targets are pc-relative byte offsets; symbolic targets
resolve to ``addr(label) - addr(instruction)``.

Compressible forms (width 2 when ``compress=True``):

    c.nop    addi x0, x0, 0
    c.li     addi rd, x0, imm       rd != 0, -32 <= imm <= 31
    c.addi   addi rd, rd, imm       rd != 0, imm != 0, -32 <= imm <= 31
    c.mv     addi rd, rs, 0         rd != 0, rs != 0, rd != rs
    c.add    add rd, rd, rs2        rd != 0, rs2 != 0
    c.slli   slli rd, rd, sh        rd != 0, sh != 0
    c.jr     jalr x0, 0(rs1)        rs1 != 0
    c.jalr   jalr ra, 0(rs1)        rs1 != 0
    c.j      jal x0, off            -2048 <= off <= 2046
    c.jal    jal ra, off            -2048 <= off <= 2046
    c.beqz   beq rs1, x0, off       rs1 in x8..x15, -256 <= off <= 254
    c.bnez   bne rs1, x0, off       rs1 in x8..x15, -256 <= off <= 254
    c.lwsp   lw rd, off(sp)         rd != 0, off % 4 == 0, 0 <= off <= 252
    c.swsp   sw rs2, off(sp)        off % 4 == 0, 0 <= off <= 252
    c.lw     lw rd, off(rs1)        rd, rs1 in x8..x15, off % 4 == 0, 0 <= off <= 124
    c.sw     sw rs2, off(rs1)       rs2, rs1 in x8..x15, off % 4 == 0, 0 <= off <= 124

Eligibility depends on resolved offsets, so widths are found by iterating
layout to a fixed point.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

TEXT_BASE = 0x1000
DATA_BASE = 0x8000
INPUT_BASE = 0xE000
INPUT_CAPACITY = 0x1000
MEM_SIZE = 0x10000

R_TYPE = ("add", "sub", "sll", "slt", "sltu", "xor", "srl", "sra", "or", "and")
I_ALU = ("addi", "slti", "sltiu", "xori", "ori", "andi")
SHIFT_IMM = ("slli", "srli", "srai")
LOADS = ("lb", "lh", "lw", "lbu", "lhu")
STORES = ("sb", "sh", "sw")
BRANCHES = ("beq", "bne", "blt", "bge", "bltu", "bgeu")
UPPER = ("lui", "auipc")
OPCODES = R_TYPE + I_ALU + SHIFT_IMM + LOADS + STORES + BRANCHES + UPPER + ("jal", "jalr", "ecall")
PSEUDO = ("nop", "mv", "li", "la", "j", "call", "ret", "beqz", "bnez")

ABI_NAMES = (
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1",
    "a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7",
    "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11",
    "t3", "t4", "t5", "t6",
)
REGISTERS = {name: i for i, name in enumerate(ABI_NAMES)}
REGISTERS.update({f"x{i}": i for i in range(32)})
REGISTERS["fp"] = 8

PAYLOAD_START = "payload"
PAYLOAD_END = "payload_end"
ENTRY_SYMBOL = "_start"


class AssemblyError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Instruction:
    op: str
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0
    width: int = 4
    addr: int = 0
    source_line: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.op not in OPCODES:
            raise ValueError(f"unknown opcode {self.op!r}")
        if self.width not in (2, 4):
            raise ValueError(f"width must be 2 or 4, got {self.width}")
        for r in (self.rd, self.rs1, self.rs2):
            if not 0 <= r < 32:
                raise ValueError(f"register index {r} out of range")


@dataclass(frozen=True)
class Program:
    text: tuple[Instruction, ...]
    data: bytes = b""
    data_base: int = DATA_BASE
    symbols: dict = field(default_factory=dict, compare=True, hash=False)
    entry: int = TEXT_BASE
    payload_range: tuple[int, int] | None = None

    @property
    def text_base(self) -> int:
        return self.text[0].addr if self.text else TEXT_BASE

    @property
    def text_end(self) -> int:
        if not self.text:
            return TEXT_BASE
        last = self.text[-1]
        return last.addr + last.width

    def instruction_at(self, addr: int) -> Instruction | None:
        return self._index().get(addr)

    def _index(self) -> dict[int, Instruction]:
        idx = self.__dict__.get("_addr_index")
        if idx is None:
            idx = {ins.addr: ins for ins in self.text}
            object.__setattr__(self, "_addr_index", idx)
        return idx


def _fits_signed(v: int, bits: int) -> bool:
    return -(1 << (bits - 1)) <= v < (1 << (bits - 1))


def compressible(ins: Instruction) -> bool:
    """Whether a resolved instruction matches one of the compressible forms."""
    op, rd, rs1, rs2, imm = ins.op, ins.rd, ins.rs1, ins.rs2, ins.imm
    creg = range(8, 16)
    if op == "addi":
        if rd == 0 and rs1 == 0 and imm == 0:
            return True
        if rd == 0:
            return False
        if rs1 == 0:
            return -32 <= imm <= 31
        if rs1 == rd:
            return imm != 0 and -32 <= imm <= 31
        return imm == 0
    if op == "add":
        return rd != 0 and rs2 != 0 and rs1 == rd
    if op == "slli":
        return rd != 0 and rs1 == rd and imm != 0
    if op == "jalr":
        return rd in (0, 1) and rs1 != 0 and imm == 0
    if op == "jal":
        return rd in (0, 1) and -2048 <= imm <= 2046
    if op in ("beq", "bne"):
        return rs1 in creg and rs2 == 0 and -256 <= imm <= 254
    if op in ("lw", "sw"):
        reg = rd if op == "lw" else rs2
        if imm % 4:
            return False
        if rs1 == 2:
            return (op == "sw" or rd != 0) and 0 <= imm <= 252
        return rs1 in creg and reg in creg and 0 <= imm <= 124
    return False


# --------------------------------------------------------------------------
# parsing

_LABEL_RE = re.compile(r"^([A-Za-z_.$][\w.$]*):")
_SYMBOL_RE = re.compile(r"^[A-Za-z_.$][\w.$]*$")
_MEM_RE = re.compile(r"^(.*)\((\s*\w+\s*)\)$")


def _strip_comment(line: str) -> str:
    in_quote = False
    for i, ch in enumerate(line):
        if ch == "'":
            in_quote = not in_quote
        elif ch == "#" and not in_quote:
            return line[:i]
    return line


def _split_operands(s: str) -> list[str]:
    s = s.strip()
    if not s:
        return []
    return [p.strip() for p in s.split(",")]


def _parse_int(tok: str, line: int, allow_char: bool = False) -> int:
    t = tok.strip()
    if allow_char and len(t) >= 3 and t[0] == "'" and t[-1] == "'":
        body = t[1:-1]
        escapes = {"\\n": "\n", "\\t": "\t", "\\0": "\0", "\\\\": "\\", "\\'": "'"}
        body = escapes.get(body, body)
        if len(body) != 1:
            raise AssemblyError(f"bad character literal {tok!r}", line)
        return ord(body)
    try:
        if re.fullmatch(r"[+-]?0[xX][0-9a-fA-F]+", t):
            return int(t, 16)
        if re.fullmatch(r"[+-]?[0-9]+", t):
            return int(t, 10)
    except ValueError:
        pass
    raise AssemblyError(f"bad immediate {tok!r}", line)


def _is_int(tok: str) -> bool:
    return bool(re.fullmatch(r"[+-]?(0[xX][0-9a-fA-F]+|[0-9]+)", tok.strip()))


def _reg(tok: str, line: int) -> int:
    r = REGISTERS.get(tok.strip().lower())
    if r is None:
        raise AssemblyError(f"unknown register {tok!r}", line)
    return r


def _mem(tok: str, line: int) -> tuple[int, int]:
    m = _MEM_RE.match(tok.strip())
    if not m:
        raise AssemblyError(f"expected offset(register), got {tok!r}", line)
    off = m.group(1).strip()
    return (_parse_int(off, line) if off else 0), _reg(m.group(2), line)


@dataclass
class _Pending:
    """An instruction whose immediate may still reference a symbol."""

    op: str
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0
    target: str | None = None   # symbol for pc-relative or absolute operands
    reloc: str = ""             # "", "pcrel", "hi", "lo"
    line: int = 0


def _hi_lo(value: int) -> tuple[int, int]:
    v = value & 0xFFFFFFFF
    lo = v & 0xFFF
    if lo >= 0x800:
        lo -= 0x1000
    hi = ((v - lo) >> 12) & 0xFFFFF
    return hi, lo


def _expand(mn: str, ops: list[str], line: int) -> list[_Pending]:
    def need(n):
        if len(ops) != n:
            raise AssemblyError(f"{mn} expects {n} operands, got {len(ops)}", line)

    def target(tok):
        tok = tok.strip()
        if _is_int(tok):
            return _parse_int(tok, line), None
        if not _SYMBOL_RE.match(tok):
            raise AssemblyError(f"bad branch target {tok!r}", line)
        return 0, tok

    if mn in R_TYPE:
        need(3)
        return [_Pending(mn, _reg(ops[0], line), _reg(ops[1], line), _reg(ops[2], line), line=line)]
    if mn in I_ALU or mn in SHIFT_IMM:
        need(3)
        return [_Pending(mn, _reg(ops[0], line), _reg(ops[1], line), imm=_parse_int(ops[2], line), line=line)]
    if mn in LOADS:
        need(2)
        off, base = _mem(ops[1], line)
        return [_Pending(mn, _reg(ops[0], line), base, imm=off, line=line)]
    if mn in STORES:
        need(2)
        off, base = _mem(ops[1], line)
        return [_Pending(mn, rs1=base, rs2=_reg(ops[0], line), imm=off, line=line)]
    if mn in BRANCHES:
        need(3)
        imm, sym = target(ops[2])
        return [_Pending(mn, rs1=_reg(ops[0], line), rs2=_reg(ops[1], line), imm=imm,
                         target=sym, reloc="pcrel", line=line)]
    if mn in UPPER:
        need(2)
        return [_Pending(mn, _reg(ops[0], line), imm=_parse_int(ops[1], line), line=line)]
    if mn == "jal":
        if len(ops) == 1:
            rd, t = 1, ops[0]
        else:
            need(2)
            rd, t = _reg(ops[0], line), ops[1]
        imm, sym = target(t)
        return [_Pending("jal", rd, imm=imm, target=sym, reloc="pcrel", line=line)]
    if mn == "jalr":
        if len(ops) == 1:
            return [_Pending("jalr", 1, _reg(ops[0], line), line=line)]
        if len(ops) == 2:
            if "(" in ops[1]:
                off, base = _mem(ops[1], line)
                return [_Pending("jalr", _reg(ops[0], line), base, imm=off, line=line)]
            return [_Pending("jalr", _reg(ops[0], line), _reg(ops[1], line), line=line)]
        need(3)
        return [_Pending("jalr", _reg(ops[0], line), _reg(ops[1], line), imm=_parse_int(ops[2], line), line=line)]
    if mn == "ecall":
        need(0)
        return [_Pending("ecall", line=line)]
    # pseudo-ops
    if mn == "nop":
        need(0)
        return [_Pending("addi", line=line)]
    if mn == "mv":
        need(2)
        return [_Pending("addi", _reg(ops[0], line), _reg(ops[1], line), line=line)]
    if mn == "li":
        need(2)
        rd, v = _reg(ops[0], line), _parse_int(ops[1], line)
        if not -(1 << 31) <= v < (1 << 32):
            raise AssemblyError(f"li immediate {v} does not fit 32 bits", line)
        if -2048 <= v <= 2047:
            return [_Pending("addi", rd, 0, imm=v, line=line)]
        hi, lo = _hi_lo(v)
        return [_Pending("lui", rd, imm=hi, line=line), _Pending("addi", rd, rd, imm=lo, line=line)]
    if mn == "la":
        need(2)
        rd, sym = _reg(ops[0], line), ops[1].strip()
        if not _SYMBOL_RE.match(sym):
            raise AssemblyError(f"bad symbol {sym!r}", line)
        return [_Pending("lui", rd, target=sym, reloc="hi", line=line),
                _Pending("addi", rd, rd, target=sym, reloc="lo", line=line)]
    if mn in ("j", "call"):
        need(1)
        imm, sym = target(ops[0])
        return [_Pending("jal", 0 if mn == "j" else 1, imm=imm, target=sym, reloc="pcrel", line=line)]
    if mn == "ret":
        need(0)
        return [_Pending("jalr", 0, 1, line=line)]
    if mn in ("beqz", "bnez"):
        need(2)
        imm, sym = target(ops[1])
        return [_Pending("beq" if mn == "beqz" else "bne", rs1=_reg(ops[0], line), rs2=0, imm=imm,
                         target=sym, reloc="pcrel", line=line)]
    raise AssemblyError(f"unknown mnemonic {mn!r}", line)


def _check_range(ins: Instruction, line: int) -> None:
    op, imm = ins.op, ins.imm
    if op in I_ALU or op in LOADS or op in STORES or op == "jalr":
        ok = _fits_signed(imm, 12)
    elif op in SHIFT_IMM:
        ok = 0 <= imm <= 31
    elif op in UPPER:
        ok = 0 <= imm <= 0xFFFFF
    elif op in BRANCHES:
        ok = _fits_signed(imm, 13) and imm % 2 == 0
    elif op == "jal":
        ok = _fits_signed(imm, 21) and imm % 2 == 0
    else:
        ok = True
    if not ok:
        raise AssemblyError(f"immediate {imm} out of encodable range for {op}", line)


def assemble(source: str, compress: bool = False) -> Program:
    """Assemble ``source`` into a Program. All-or-nothing: errors raise AssemblyError."""
    text_items: list[_Pending] = []
    text_labels: dict[str, int] = {}        # label -> index into text_items
    data = bytearray()
    data_labels: dict[str, int] = {}
    data_words: list[tuple[int, str, int]] = []  # (offset, symbol, line) patched after layout
    seen: set[str] = set()
    section = "text"

    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        while True:
            m = _LABEL_RE.match(line)
            if not m:
                break
            name = m.group(1)
            if name in seen:
                raise AssemblyError(f"duplicate label {name!r}", lineno)
            seen.add(name)
            if section == "text":
                text_labels[name] = len(text_items)
            else:
                data_labels[name] = len(data)
            line = line[m.end():].strip()
        if not line:
            continue
        parts = line.split(None, 1)
        mn = parts[0].lower()
        rest = parts[1] if len(parts) > 1 else ""
        if mn.startswith("."):
            if mn == ".text":
                section = "text"
            elif mn == ".data":
                section = "data"
            elif mn in (".global", ".globl"):
                pass
            elif mn in (".word", ".byte", ".space", ".align"):
                if section != "data":
                    raise AssemblyError(f"{mn} is only allowed in .data", lineno)
                ops = _split_operands(rest)
                if mn == ".byte":
                    for tok in ops:
                        v = _parse_int(tok, lineno, allow_char=True)
                        if not -128 <= v <= 255:
                            raise AssemblyError(f"byte value {v} out of range", lineno)
                        data.append(v & 0xFF)
                elif mn == ".word":
                    for tok in ops:
                        if _SYMBOL_RE.match(tok) and not _is_int(tok):
                            data_words.append((len(data), tok, lineno))
                            data.extend(b"\0\0\0\0")
                            continue
                        v = _parse_int(tok, lineno, allow_char=True)
                        if not -(1 << 31) <= v < (1 << 32):
                            raise AssemblyError(f"word value {v} out of range", lineno)
                        data.extend((v & 0xFFFFFFFF).to_bytes(4, "little"))
                elif mn == ".space":
                    if len(ops) != 1:
                        raise AssemblyError(".space expects one operand", lineno)
                    n = _parse_int(ops[0], lineno)
                    if n < 0:
                        raise AssemblyError("negative .space", lineno)
                    data.extend(bytes(n))
                else:
                    n = _parse_int(ops[0], lineno) if ops else 2
                    align = 1 << n
                    while len(data) % align:
                        data.append(0)
            else:
                raise AssemblyError(f"unknown directive {mn!r}", lineno)
            continue
        if section != "text":
            raise AssemblyError("instructions are only allowed in .text", lineno)
        text_items.extend(_expand(mn, _split_operands(rest), lineno))

    if len(data) > INPUT_BASE - DATA_BASE:
        raise AssemblyError(f"data segment too large ({len(data)} bytes)")

    def data_addr(name):
        return DATA_BASE + data_labels[name]

    for item in text_items:
        if item.target is not None and item.target not in text_labels and item.target not in data_labels:
            raise AssemblyError(f"undefined label {item.target!r}", item.line)
    for _, sym, lineno in data_words:
        if sym not in text_labels and sym not in data_labels:
            raise AssemblyError(f"undefined label {sym!r}", lineno)

    def resolve(widths):
        addrs = []
        a = TEXT_BASE
        for w in widths:
            addrs.append(a)
            a += w
        end = a

        def sym_addr(name):
            if name in data_labels:
                return data_addr(name)
            idx = text_labels[name]
            return addrs[idx] if idx < len(addrs) else end

        out = []
        for item, addr, w in zip(text_items, addrs, widths):
            imm = item.imm
            if item.target is not None:
                v = sym_addr(item.target)
                if item.reloc == "pcrel":
                    imm = v - addr
                elif item.reloc == "hi":
                    imm = _hi_lo(v)[0]
                else:
                    imm = _hi_lo(v)[1]
            out.append(Instruction(item.op, item.rd, item.rs1, item.rs2, imm, w, addr, item.line))
        return out, sym_addr

    widths = [4] * len(text_items)
    if compress:
        widths = [2] * len(text_items)
        for _ in range(64):
            resolved, _ = resolve(widths)
            new = [2 if compressible(ins) else 4 for ins in resolved]
            if new == widths:
                break
            widths = new
        else:
            raise AssemblyError("compressed layout did not converge")
    resolved, sym_addr = resolve(widths)
    for ins in resolved:
        _check_range(ins, ins.source_line)
    end = resolved[-1].addr + resolved[-1].width if resolved else TEXT_BASE
    if end > DATA_BASE:
        raise AssemblyError(f"text segment too large (ends at {end:#x})")

    for off, sym, _ in data_words:
        data[off:off + 4] = (sym_addr(sym) & 0xFFFFFFFF).to_bytes(4, "little")

    symbols = {name: sym_addr(name) for name in list(text_labels) + list(data_labels)}
    if not resolved:
        raise AssemblyError("program has no instructions")
    entry = symbols.get(ENTRY_SYMBOL, TEXT_BASE)
    if ENTRY_SYMBOL in data_labels:
        raise AssemblyError(f"{ENTRY_SYMBOL} must be a text label")
    payload_range = None
    if PAYLOAD_START in text_labels and PAYLOAD_END in text_labels:
        payload_range = (symbols[PAYLOAD_START], symbols[PAYLOAD_END])
        if not payload_range[0] < payload_range[1]:
            raise AssemblyError("empty payload range")
    return Program(tuple(resolved), bytes(data), DATA_BASE, symbols, entry, payload_range)


# --------------------------------------------------------------------------
# disassembly

def _r(i: int) -> str:
    return f"x{i}"


def format_instruction(ins: Instruction, labels: dict[int, str] | None = None) -> str:
    op = ins.op
    if op in R_TYPE:
        s = f"{op} {_r(ins.rd)}, {_r(ins.rs1)}, {_r(ins.rs2)}"
    elif op in I_ALU or op in SHIFT_IMM:
        s = f"{op} {_r(ins.rd)}, {_r(ins.rs1)}, {ins.imm}"
    elif op in LOADS:
        s = f"{op} {_r(ins.rd)}, {ins.imm}({_r(ins.rs1)})"
    elif op in STORES:
        s = f"{op} {_r(ins.rs2)}, {ins.imm}({_r(ins.rs1)})"
    elif op in BRANCHES:
        s = f"{op} {_r(ins.rs1)}, {_r(ins.rs2)}, {ins.imm}"
    elif op in UPPER:
        s = f"{op} {_r(ins.rd)}, {ins.imm:#x}"
    elif op == "jal":
        s = f"jal {_r(ins.rd)}, {ins.imm}"
    elif op == "jalr":
        s = f"jalr {_r(ins.rd)}, {ins.imm}({_r(ins.rs1)})"
    else:
        s = "ecall"
    if labels and (op in BRANCHES or op == "jal"):
        name = labels.get(ins.addr + ins.imm)
        if name:
            s += f"  # -> {name}"
    return s


def disassemble(program: Program) -> str:
    """Render ``program`` as source that re-assembles to the same image.

    Branch and jump operands are printed as pc-relative offsets with the
    target label in a trailing comment.
    """
    by_addr: dict[int, list[str]] = {}
    for name, addr in sorted(program.symbols.items(), key=lambda kv: (kv[1], kv[0])):
        by_addr.setdefault(addr, []).append(name)
    first_label = {addr: names[0] for addr, names in by_addr.items()}
    lines = [".text"]
    for ins in program.text:
        for name in by_addr.get(ins.addr, []):
            lines.append(f"{name}:")
        lines.append(f"    {format_instruction(ins, first_label)}")
    for name in by_addr.get(program.text_end, []):
        lines.append(f"{name}:")
    if program.data or any(program.data_base <= a for a in by_addr):
        lines.append(".data")
        base = program.data_base
        for off in range(len(program.data)):
            for name in by_addr.get(base + off, []):
                lines.append(f"{name}:")
            lines.append(f"    .byte {program.data[off]}")
        for name in by_addr.get(base + len(program.data), []):
            lines.append(f"{name}:")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# program image files

IMAGE_FORMAT = 1


def program_to_dict(program: Program) -> dict:
    """JSON-ready image: one ``[op, rd, rs1, rs2, imm, width, addr, line]`` row per instruction."""
    return {
        "format": IMAGE_FORMAT,
        "entry": program.entry,
        "data_base": program.data_base,
        "data": program.data.hex(),
        "symbols": dict(sorted(program.symbols.items())),
        "payload_range": list(program.payload_range) if program.payload_range else None,
        "text": [[i.op, i.rd, i.rs1, i.rs2, i.imm, i.width, i.addr, i.source_line] for i in program.text],
    }


def program_from_dict(d: dict) -> Program:
    if d.get("format") != IMAGE_FORMAT:
        raise ValueError(f"not a format-{IMAGE_FORMAT} program image")
    try:
        text = tuple(Instruction(op, rd, rs1, rs2, imm, width, addr, line)
                     for op, rd, rs1, rs2, imm, width, addr, line in d["text"])
        pr = d["payload_range"]
        prog = Program(text, bytes.fromhex(d["data"]), int(d["data_base"]),
                       {str(k): int(v) for k, v in d["symbols"].items()}, int(d["entry"]),
                       tuple(pr) if pr else None)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed program image: {exc}") from exc
    addr = prog.text_base
    for ins in prog.text:
        if ins.addr != addr:
            raise ValueError(f"program image: instruction at {ins.addr:#x} breaks address contiguity")
        addr += ins.width
    if prog.text and prog.instruction_at(prog.entry) is None:
        raise ValueError(f"program image: entry {prog.entry:#x} is not an instruction address")
    return prog
