"""Post-compilation OpenQASM subset: parsing, printing, binary encoding, layering.

The accepted language is the six instruction forms a control unit executes
after compilation::

    U(theta, phi, lambda) q[i];      (also lowercase ``u``)
    CX q[i], q[j];                   (also ``cx``)
    measure q[i] -> c[j];
    reset q[i];
    if (c[j] == v) <one of the above>;
    wait n;                          (n control-clock cycles)

``qreg``/``creg`` declarations are required; ``OPENQASM 2.0;`` and
``include`` lines are accepted and ignored. Several registers of a kind are
flattened into one index space in declaration order.
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union


class QasmError(ValueError):
    """Raised for malformed or unsupported program text."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f"{line}:{column}: " if line is not None else ""
        super().__init__(where + message)


class EncodeError(ValueError):
    pass


class UnsupportedForNoisySimulation(ValueError):
    """The Monte-Carlo path accepts straight-line U/CX/Measure programs only."""


# ---------------------------------------------------------------------------
# Instructions


@dataclass(frozen=True)
class U:
    theta: float
    phi: float
    lam: float
    qubit: int

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.qubit,)


@dataclass(frozen=True)
class CX:
    control: int
    target: int

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.control, self.target)


@dataclass(frozen=True)
class Measure:
    qubit: int
    cbit: int

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.qubit,)


@dataclass(frozen=True)
class Reset:
    qubit: int

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.qubit,)


@dataclass(frozen=True)
class Wait:
    cycles: int

    @property
    def qubits(self) -> tuple[int, ...]:
        return ()


@dataclass(frozen=True)
class If:
    cbit: int
    value: int
    inner: "Instruction"

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.inner.qubits


Instruction = Union[U, CX, Measure, Reset, If, Wait]
QUANTUM_OPS = (U, CX, Measure, Reset)


@dataclass(frozen=True)
class Program:
    qubit_count: int
    cbit_count: int
    instructions: tuple[Instruction, ...]
    source_name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))

    def __len__(self) -> int:
        return len(self.instructions)

    def count(self, kind: type) -> int:
        return sum(isinstance(ins, kind) for ins in self.instructions)

    @property
    def has_control_flow(self) -> bool:
        return any(isinstance(ins, (If, Wait)) for ins in self.instructions)

    def without_measurements(self) -> "Program":
        kept = [ins for ins in self.instructions if not isinstance(ins, Measure)]
        return Program(self.qubit_count, self.cbit_count, tuple(kept), self.source_name)

    def check(self) -> None:
        """Raise QasmError if any instruction breaks the program invariants."""
        for idx, ins in enumerate(self.instructions):
            _check_instruction(ins, self.qubit_count, self.cbit_count, f"instruction {idx}")


def _check_instruction(ins: Instruction, nq: int, nc: int, where: str, line=None, col=None) -> None:
    def fail(msg):
        raise QasmError(f"{where}: {msg}", line, col)

    if isinstance(ins, If):
        if isinstance(ins.inner, If):
            fail("nested conditional")
        if ins.value not in (0, 1):
            fail(f"conditional value must be 0 or 1, got {ins.value}")
        if not 0 <= ins.cbit < nc:
            fail(f"classical bit {ins.cbit} out of range (creg size {nc})")
        _check_instruction(ins.inner, nq, nc, where, line, col)
        return
    if isinstance(ins, Wait):
        if ins.cycles < 0:
            fail("negative wait")
        return
    for q in ins.qubits:
        if not 0 <= q < nq:
            fail(f"qubit {q} out of range (qreg size {nq})")
    if isinstance(ins, CX) and ins.control == ins.target:
        fail("CX control equals target")
    if isinstance(ins, Measure) and not 0 <= ins.cbit < nc:
        fail(f"classical bit {ins.cbit} out of range (creg size {nc})")
    if isinstance(ins, U) and not all(map(math.isfinite, (ins.theta, ins.phi, ins.lam))):
        fail("non-finite angle")


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\n]*")
  | (?P<op>->|==|[\[\](),;+\-*/^])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    line, line_start, pos = 1, 0, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise QasmError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0
        self.qregs: dict[str, tuple[int, int]] = {}
        self.cregs: dict[str, tuple[int, int]] = {}
        self.nq = 0
        self.nc = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        return QasmError(msg, tok.line, tok.col)

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text:
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.advance()

    def expect_kind(self, kind: str) -> _Tok:
        if self.tok.kind != kind:
            found = self.tok.text or "end of input"
            raise self.error(f"expected {kind}, found {found!r}")
        return self.advance()

    def integer(self) -> int:
        tok = self.expect_kind("number")
        if not tok.text.isdigit():
            raise self.error("expected a non-negative integer", tok)
        return int(tok.text)

    # -- expressions: angle arithmetic over numbers and pi
    def expr(self) -> float:
        value = self.term()
        while self.tok.text in ("+", "-"):
            op = self.advance().text
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self) -> float:
        value = self.power()
        while self.tok.text in ("*", "/"):
            op = self.advance().text
            tok = self.tok
            rhs = self.power()
            if op == "/":
                if rhs == 0:
                    raise self.error("division by zero", tok)
                value = value / rhs
            else:
                value = value * rhs
        return value

    def power(self) -> float:
        base = self.unary()
        if self.tok.text == "^":
            self.advance()
            return base ** self.power()
        return base

    def unary(self) -> float:
        if self.tok.text in ("+", "-"):
            sign = -1.0 if self.advance().text == "-" else 1.0
            return sign * self.unary()
        return self.atom()

    def atom(self) -> float:
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return float(tok.text)
        if tok.kind == "ident" and tok.text == "pi":
            self.advance()
            return math.pi
        if tok.text == "(":
            self.advance()
            value = self.expr()
            self.expect(")")
            return value
        raise self.error(f"bad angle expression at {tok.text or 'end of input'!r}")

    # -- operands
    def operand(self, regs: dict[str, tuple[int, int]], what: str) -> int:
        name_tok = self.expect_kind("ident")
        if name_tok.text not in regs:
            raise self.error(f"undeclared {what} register {name_tok.text!r}", name_tok)
        offset, size = regs[name_tok.text]
        if self.tok.text != "[":
            if size == 1:
                return offset
            raise self.error(f"register {name_tok.text!r} needs an index")
        self.advance()
        idx_tok = self.tok
        idx = self.integer()
        self.expect("]")
        if idx >= size:
            raise self.error(f"index {idx} out of range for {name_tok.text}[{size}]", idx_tok)
        return offset + idx

    def qubit(self) -> int:
        return self.operand(self.qregs, "quantum")

    def cbit(self) -> int:
        return self.operand(self.cregs, "classical")

    # -- statements
    def parse(self, name: str) -> Program:
        instrs: list[Instruction] = []
        while self.tok.kind != "eof":
            ins = self.statement()
            if ins is not None:
                instrs.append(ins)
        if not self.qregs:
            raise QasmError("program declares no qreg", 1, 1)
        return Program(self.nq, self.nc, tuple(instrs), name)

    def statement(self) -> Instruction | None:
        tok = self.tok
        word = tok.text
        if word == "OPENQASM":
            self.advance()
            self.expect_kind("number")
            self.expect(";")
            return None
        if word == "include":
            self.advance()
            self.expect_kind("string")
            self.expect(";")
            return None
        if word in ("qreg", "creg"):
            self.advance()
            name = self.expect_kind("ident")
            self.expect("[")
            size = self.integer()
            self.expect("]")
            self.expect(";")
            regs = self.qregs if word == "qreg" else self.cregs
            if name.text in self.qregs or name.text in self.cregs:
                raise self.error(f"register {name.text!r} redeclared", name)
            if word == "qreg":
                regs[name.text] = (self.nq, size)
                self.nq += size
            else:
                regs[name.text] = (self.nc, size)
                self.nc += size
            return None
        if word == "if":
            self.advance()
            self.expect("(")
            cbit = self.cbit()
            self.expect("==")
            val_tok = self.tok
            value = self.integer()
            if value not in (0, 1):
                raise self.error("conditional value must be 0 or 1", val_tok)
            self.expect(")")
            if self.tok.text == "if":
                raise self.error("nested conditional")
            inner = self.simple_statement()
            return If(cbit, value, inner)
        return self.simple_statement()

    def simple_statement(self) -> Instruction:
        tok = self.tok
        word = tok.text
        if tok.kind != "ident":
            raise self.error(f"unexpected {word or 'end of input'!r}")
        if not self.qregs and word != "wait":
            raise self.error("quantum operation before qreg declaration")
        self.advance()
        if word in ("U", "u"):
            self.expect("(")
            theta = self.expr()
            self.expect(",")
            phi = self.expr()
            self.expect(",")
            lam = self.expr()
            self.expect(")")
            ins: Instruction = U(theta, phi, lam, self.qubit())
        elif word in ("CX", "cx"):
            ctrl = self.qubit()
            self.expect(",")
            tgt_tok = self.tok
            tgt = self.qubit()
            if ctrl == tgt:
                raise self.error("CX control equals target", tgt_tok)
            ins = CX(ctrl, tgt)
        elif word == "measure":
            q = self.qubit()
            self.expect("->")
            ins = Measure(q, self.cbit())
        elif word == "reset":
            ins = Reset(self.qubit())
        elif word == "wait":
            ins = Wait(self.integer())
        else:
            raise self.error(f"unknown gate {word!r}", tok)
        self.expect(";")
        return ins


def parse_program(source: str, name: str = "") -> Program:
    """Parse program text into a Program; raises QasmError with line/column."""
    return _Parser(source).parse(name)


def load_program(path: str | Path) -> Program:
    path = Path(path)
    return parse_program(path.read_text(encoding="utf-8"), name=path.stem)


def _fmt_angle(x: float) -> str:
    return repr(float(x))


def format_instruction(ins: Instruction) -> str:
    if isinstance(ins, U):
        return f"U({_fmt_angle(ins.theta)},{_fmt_angle(ins.phi)},{_fmt_angle(ins.lam)}) q[{ins.qubit}];"
    if isinstance(ins, CX):
        return f"CX q[{ins.control}],q[{ins.target}];"
    if isinstance(ins, Measure):
        return f"measure q[{ins.qubit}] -> c[{ins.cbit}];"
    if isinstance(ins, Reset):
        return f"reset q[{ins.qubit}];"
    if isinstance(ins, Wait):
        return f"wait {ins.cycles};"
    if isinstance(ins, If):
        return f"if (c[{ins.cbit}]=={ins.value}) {format_instruction(ins.inner)}"
    raise TypeError(f"not an instruction: {ins!r}")


def format_program(p: Program) -> str:
    lines = ["OPENQASM 2.0;", f"qreg q[{p.qubit_count}];"]
    if p.cbit_count:
        lines.append(f"creg c[{p.cbit_count}];")
    lines.extend(format_instruction(ins) for ins in p.instructions)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Binary encoding
#
# One 32-bit word per instruction, opcode in bits [31:28]:
#
#   U       1 | qubit[27:20] | param index[19:0]
#   CX      2 | control[27:20] | target[19:12]
#   Measure 3 | qubit[27:20] | cbit[19:8]
#   Reset   4 | qubit[27:20]
#   If      5 | value[27] | cbit[26:20] | guarded op[19:0]
#   Wait    6 | cycles[27:0]
#
# The guarded op in an If word is packed compactly: opcode[19:17], then
#   U qubit[16:12] param[11:0]; CX control[16:12] target[11:7];
#   Measure qubit[16:12] cbit[11:5]; Reset qubit[16:12]; Wait cycles[16:0].

OP_U, OP_CX, OP_MEASURE, OP_RESET, OP_IF, OP_WAIT = 1, 2, 3, 4, 5, 6

MAGIC = b"SANQ"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIIBB")


@dataclass(frozen=True)
class EncodedProgram:
    words: tuple[int, ...]
    param_table: tuple[tuple[float, float, float], ...]
    qubit_count: int
    cbit_count: int
    source_name: str = ""


def _field(value: int, bits: int, what: str) -> int:
    if not 0 <= value < (1 << bits):
        raise EncodeError(f"{what} {value} does not fit in {bits} bits")
    return value


class _ParamTable:
    def __init__(self):
        self.index: dict[tuple[float, float, float], int] = {}
        self.rows: list[tuple[float, float, float]] = []

    def add(self, ins: U, bits: int) -> int:
        key = (float(ins.theta), float(ins.phi), float(ins.lam))
        if key not in self.index:
            self.index[key] = len(self.rows)
            self.rows.append(key)
        idx = self.index[key]
        if idx >= (1 << bits):
            raise EncodeError(f"parameter table index {idx} exceeds {bits}-bit field")
        return idx


def _encode_inner(ins: Instruction, params: _ParamTable) -> int:
    if isinstance(ins, U):
        return (OP_U << 17) | (_field(ins.qubit, 5, "qubit") << 12) | params.add(ins, 12)
    if isinstance(ins, CX):
        return (OP_CX << 17) | (_field(ins.control, 5, "qubit") << 12) | (_field(ins.target, 5, "qubit") << 7)
    if isinstance(ins, Measure):
        return (OP_MEASURE << 17) | (_field(ins.qubit, 5, "qubit") << 12) | (_field(ins.cbit, 7, "cbit") << 5)
    if isinstance(ins, Reset):
        return (OP_RESET << 17) | (_field(ins.qubit, 5, "qubit") << 12)
    if isinstance(ins, Wait):
        return (OP_WAIT << 17) | _field(ins.cycles, 17, "wait cycles")
    raise EncodeError(f"cannot guard {type(ins).__name__}")


def _encode_one(ins: Instruction, params: _ParamTable) -> int:
    if isinstance(ins, U):
        return (OP_U << 28) | (_field(ins.qubit, 8, "qubit") << 20) | params.add(ins, 20)
    if isinstance(ins, CX):
        return (OP_CX << 28) | (_field(ins.control, 8, "qubit") << 20) | (_field(ins.target, 8, "qubit") << 12)
    if isinstance(ins, Measure):
        return (OP_MEASURE << 28) | (_field(ins.qubit, 8, "qubit") << 20) | (_field(ins.cbit, 12, "cbit") << 8)
    if isinstance(ins, Reset):
        return (OP_RESET << 28) | (_field(ins.qubit, 8, "qubit") << 20)
    if isinstance(ins, Wait):
        return (OP_WAIT << 28) | _field(ins.cycles, 28, "wait cycles")
    if isinstance(ins, If):
        return ((OP_IF << 28) | (_field(ins.value, 1, "value") << 27)
                | (_field(ins.cbit, 7, "cbit") << 20) | _encode_inner(ins.inner, params))
    raise EncodeError(f"not an instruction: {ins!r}")


def encode_program(p: Program) -> EncodedProgram:
    params = _ParamTable()
    words = tuple(_encode_one(ins, params) for ins in p.instructions)
    return EncodedProgram(words, tuple(params.rows), p.qubit_count, p.cbit_count, p.source_name)


def _decode_inner(payload: int, table) -> Instruction:
    op = (payload >> 17) & 0x7
    a = (payload >> 12) & 0x1F
    if op == OP_U:
        return U(*table[payload & 0xFFF], a)
    if op == OP_CX:
        return CX(a, (payload >> 7) & 0x1F)
    if op == OP_MEASURE:
        return Measure(a, (payload >> 5) & 0x7F)
    if op == OP_RESET:
        return Reset(a)
    if op == OP_WAIT:
        return Wait(payload & 0x1FFFF)
    raise EncodeError(f"bad guarded opcode {op}")


def _decode_one(word: int, table) -> Instruction:
    op = word >> 28
    a = (word >> 20) & 0xFF
    if op == OP_U:
        return U(*table[word & 0xFFFFF], a)
    if op == OP_CX:
        return CX(a, (word >> 12) & 0xFF)
    if op == OP_MEASURE:
        return Measure(a, (word >> 8) & 0xFFF)
    if op == OP_RESET:
        return Reset(a)
    if op == OP_WAIT:
        return Wait(word & 0xFFFFFFF)
    if op == OP_IF:
        return If((word >> 20) & 0x7F, (word >> 27) & 1, _decode_inner(word & 0xFFFFF, table))
    raise EncodeError(f"bad opcode {op} in word {word:#010x}")


def decode_program(enc: EncodedProgram) -> Program:
    try:
        instrs = tuple(_decode_one(w, enc.param_table) for w in enc.words)
    except IndexError as exc:
        raise EncodeError("parameter index outside table") from exc
    return Program(enc.qubit_count, enc.cbit_count, instrs, enc.source_name)


def to_bytes(enc: EncodedProgram) -> bytes:
    if enc.qubit_count > 255 or enc.cbit_count > 255:
        raise EncodeError("binary format holds at most 255 qubits and 255 classical bits")
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, len(enc.words), len(enc.param_table),
                        enc.qubit_count, enc.cbit_count)
    body = struct.pack(f"<{len(enc.words)}I", *enc.words)
    flat = [x for row in enc.param_table for x in row]
    return head + body + struct.pack(f"<{len(flat)}d", *flat)


def from_bytes(data: bytes, name: str = "") -> EncodedProgram:
    if len(data) < _HEADER.size:
        raise EncodeError("truncated header")
    magic, version, nwords, nparams, nq, nc = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise EncodeError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise EncodeError(f"unsupported format version {version}")
    expected = _HEADER.size + 4 * nwords + 24 * nparams
    if len(data) != expected:
        raise EncodeError(f"expected {expected} bytes, got {len(data)}")
    words = struct.unpack_from(f"<{nwords}I", data, _HEADER.size)
    flat = struct.unpack_from(f"<{3 * nparams}d", data, _HEADER.size + 4 * nwords)
    table = tuple(tuple(flat[i:i + 3]) for i in range(0, len(flat), 3))
    return EncodedProgram(words, table, nq, nc, name)


def write_binary(p: Program, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(encode_program(p)))


def read_binary(path: str | Path) -> Program:
    path = Path(path)
    return decode_program(from_bytes(path.read_bytes(), name=path.stem))


# ---------------------------------------------------------------------------
# Layering


@dataclass(frozen=True)
class LayerOp:
    index: int  # position of the source instruction in the program
    instr: Instruction

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.instr.qubits


@dataclass(frozen=True)
class LayeredCircuit:
    qubit_count: int
    cbit_count: int
    layers: tuple[tuple[LayerOp, ...], ...]
    source_name: str = ""

    @property
    def depth(self) -> int:
        return len(self.layers)

    def ops(self) -> Iterable[tuple[int, LayerOp]]:
        for li, layer in enumerate(self.layers):
            for op in layer:
                yield li, op

    @property
    def gate_count(self) -> int:
        return sum(isinstance(op.instr, (U, CX)) for _, op in self.ops())


def _greedy_layers(items: Sequence[tuple[int, Instruction]], nq: int) -> list[list[LayerOp]]:
    frontier = [0] * nq
    layers: list[list[LayerOp]] = []
    for idx, ins in items:
        qs = ins.qubits
        li = max(frontier[q] for q in qs)
        while len(layers) <= li:
            layers.append([])
        layers[li].append(LayerOp(idx, ins))
        for q in qs:
            frontier[q] = li + 1
    return layers


def build_layers(p: Program) -> LayeredCircuit:
    """ASAP layering of a straight-line program; each op lands in the
    earliest layer after every earlier op sharing one of its qubits."""
    for idx, ins in enumerate(p.instructions):
        if isinstance(ins, (If, Wait)):
            raise UnsupportedForNoisySimulation(
                f"instruction {idx} ({type(ins).__name__}) is control flow; "
                "noisy simulation needs a straight-line program")
    layers = _greedy_layers(list(enumerate(p.instructions)), p.qubit_count)
    return LayeredCircuit(p.qubit_count, p.cbit_count, tuple(map(tuple, layers)), p.source_name)


def layer_all_quantum_ops(p: Program) -> LayeredCircuit:
    """Layering that also places the guarded op of every If (Waits skipped).

    Used by co-simulation so error positions exist for conditional gates.
    """
    items = []
    for idx, ins in enumerate(p.instructions):
        if isinstance(ins, If):
            if isinstance(ins.inner, QUANTUM_OPS):
                items.append((idx, ins.inner))
        elif not isinstance(ins, Wait):
            items.append((idx, ins))
    layers = _greedy_layers(items, p.qubit_count)
    return LayeredCircuit(p.qubit_count, p.cbit_count, tuple(map(tuple, layers)), p.source_name)


# ---------------------------------------------------------------------------
# Device compatibility


@dataclass(frozen=True)
class Violation:
    index: int
    kind: str  # "qubit-range" or "coupling"
    detail: str


def validate_against_device(p: Program, device) -> list[Violation]:
    """List every qubit outside the device and every CX on a missing edge.

    ``device`` needs ``qubit_count`` and ``has_edge(a, b)`` (a DeviceErrorModel).
    """
    report: list[Violation] = []
    if p.qubit_count > device.qubit_count:
        report.append(Violation(-1, "qubit-range",
                                f"qreg size {p.qubit_count} > device size {device.qubit_count}"))
    for idx, ins in enumerate(p.instructions):
        op = ins.inner if isinstance(ins, If) else ins
        bad = [q for q in op.qubits if q >= device.qubit_count]
        for q in bad:
            report.append(Violation(idx, "qubit-range", f"qubit {q} >= device size {device.qubit_count}"))
        if isinstance(op, CX) and not bad and not device.has_edge(op.control, op.target):
            report.append(Violation(idx, "coupling", f"no coupling edge ({op.control},{op.target})"))
    return report
