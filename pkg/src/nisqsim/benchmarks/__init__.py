"""Benchmark programs shipped as .qasm fixtures, and the generator that wrote them.

``bell``, ``bv4``, ``bv5`` and ``rb`` are real circuits. The others are
count-matched surrogates: seeded random U/CX sequences on the bow-tie
coupling graph with the same qubit, U, CX and measurement counts as the
published post-compilation programs, whose exact text is not available.
Run ``python -m nisqsim.benchmarks`` to rewrite the files; the test suite
checks the shipped files against this generator.
"""

from __future__ import annotations

import math
from importlib.resources import files
from pathlib import Path

import numpy as np

from ..qasm import Program, parse_program

BOWTIE_EDGES = ((0, 1), (0, 2), (1, 2), (2, 3), (2, 4), (3, 4))

# name: (qubits, U count, CX count, measure count)
SHAPES = {
    "rb": (2, 9, 2, 2),
    "grover": (3, 87, 25, 3),
    "wstate": (3, 21, 9, 3),
    "7x1mod15": (4, 17, 9, 4),
    "bv4": (4, 8, 3, 3),
    "bv5": (5, 10, 4, 4),
    "qft4": (4, 42, 15, 4),
    "qft5": (5, 83, 26, 5),
    "qv_n5d2": (5, 44, 12, 5),
    "qv_n5d3": (5, 74, 21, 5),
    "qv_n5d4": (5, 100, 30, 5),
    "qv_n5d5": (5, 130, 36, 5),
}
SURROGATE_SEEDS = {"grover": 11, "wstate": 12, "7x1mod15": 13, "qft4": 14, "qft5": 15,
                   "qv_n5d2": 22, "qv_n5d3": 23, "qv_n5d4": 24, "qv_n5d5": 25}
EXTRA = ("bell", "bv4_prefix", "bv4_prefix_reordered", "allxy", "active_reset")

H = "U(pi/2,0,pi)"
X = "U(pi,0,pi)"


def _header(nq: int, nc: int, comment: str) -> list[str]:
    return [f"// {comment}", "OPENQASM 2.0;", f"qreg q[{nq}];", f"creg c[{nc}];"]


def _angle(k: int, den: int = 8) -> str:
    k %= 2 * den
    if k == 0:
        return "0"
    if k == den:
        return "pi"
    g = math.gcd(k, den)
    num, d = k // g, den // g
    return f"{num}*pi/{d}" if num != 1 else f"pi/{d}"


def bell_text() -> str:
    lines = _header(2, 2, "Bell-state preparation")
    lines += [f"{H} q[0];", "CX q[0],q[1];", "measure q[0] -> c[0];", "measure q[1] -> c[1];"]
    return "\n".join(lines) + "\n"


def bv_text(n: int) -> str:
    """Bernstein-Vazirani with secret all-ones; q[2] is the oracle qubit (the hub)."""
    data = [q for q in range(n) if q != 2]
    lines = _header(n, n - 1, f"Bernstein-Vazirani, {n} qubits, oracle on q[2]")
    lines += [f"{H} q[{q}];" for q in data]
    lines += [f"{X} q[2];", f"{H} q[2];"]
    lines += [f"CX q[{q}],q[2];" for q in data]
    lines += [f"{H} q[{q}];" for q in data]
    lines += [f"measure q[{q}] -> c[{i}];" for i, q in enumerate(data)]
    return "\n".join(lines) + "\n"


def _u_params(v: np.ndarray) -> tuple[float, float, float]:
    """U(theta, phi, lambda) equal to ``v`` up to global phase."""
    c, s = abs(v[0, 0]), abs(v[1, 0])
    theta = 2 * math.atan2(s, c)
    if c < 1e-12:
        return theta, float(np.angle(v[1, 0])), float(np.angle(-v[0, 1]))
    a = float(np.angle(v[0, 0]))
    if s < 1e-12:
        return theta, 0.0, float(np.angle(v[1, 1])) - a
    return theta, float(np.angle(v[1, 0])) - a, float(np.angle(-v[0, 1])) - a


def rb_text(seed: int = 5) -> str:
    """Two-qubit sequence composing to the identity (ideal output 00)."""
    from ..state import u_matrix

    rng = np.random.default_rng(seed)
    k = lambda: int(rng.integers(0, 8))  # noqa: E731
    u1, u2, u4 = [(k(), k(), k()) for _ in range(3)]
    u6, u8 = [(k(), k(), k()) for _ in range(2)]
    z3 = k()  # diagonal on the control commutes with CX
    x7 = k()  # x-rotation on the target commutes with CX

    def mat(t):
        return u_matrix(*(x * math.pi / 4 for x in t))

    q0 = mat(u4) @ u_matrix(0, 0, z3 * math.pi / 4) @ mat(u2) @ mat(u1)
    q1 = mat(u8) @ u_matrix(x7 * math.pi / 4, -math.pi / 2, math.pi / 2) @ mat(u6)
    u5 = _u_params(np.linalg.inv(q0))
    u9 = _u_params(np.linalg.inv(q1))

    def fmt(t, q):
        return f"U({_angle(t[0], 4)},{_angle(t[1], 4)},{_angle(t[2], 4)}) q[{q}];"

    lines = _header(2, 2, "two-qubit randomized-benchmarking style sequence, net identity")
    lines += [fmt(u1, 0), fmt(u6, 1), fmt(u2, 0), "CX q[0],q[1];",
              f"U(0,0,{_angle(z3, 4)}) q[0];", f"U({_angle(x7, 4)},-pi/2,pi/2) q[1];",
              "CX q[0],q[1];", fmt(u4, 0), fmt(u8, 1),
              f"U({u5[0]!r},{u5[1]!r},{u5[2]!r}) q[0];",
              f"U({u9[0]!r},{u9[1]!r},{u9[2]!r}) q[1];",
              "measure q[0] -> c[0];", "measure q[1] -> c[1];"]
    return "\n".join(lines) + "\n"


def surrogate_text(name: str) -> str:
    nq, n_u, n_cx, n_meas = SHAPES[name]
    seed = SURROGATE_SEEDS[name]
    rng = np.random.default_rng(seed)
    edges = [e for e in BOWTIE_EDGES if max(e) < nq]
    kinds = np.array(["U"] * n_u + ["CX"] * n_cx)
    rng.shuffle(kinds)
    lines = _header(nq, n_meas, f"{name}: count-matched surrogate "
                    f"({nq} qubits, {n_u} U, {n_cx} CX, {n_meas} measure), seed {seed}")
    for kind in kinds:
        if kind == "U":
            q = int(rng.integers(nq))
            t, p, l = (int(x) for x in rng.integers(0, 16, size=3))
            lines.append(f"U({_angle(t)},{_angle(p)},{_angle(l)}) q[{q}];")
        else:
            a, b = edges[int(rng.integers(len(edges)))]
            if rng.random() < 0.5:
                a, b = b, a
            lines.append(f"CX q[{a}],q[{b}];")
    lines += [f"measure q[{q}] -> c[{q}];" for q in range(n_meas)]
    return "\n".join(lines) + "\n"


def bv4_prefix_text(reordered: bool = False) -> str:
    body = [f"{H} q[0];", f"{H} q[1];", f"{H} q[2];", f"{X} q[3];", f"{H} q[3];"]
    if reordered:
        body[2], body[3] = body[3], body[2]
    tag = "reordered " if reordered else ""
    return "\n".join(_header(4, 3, f"first five bv4 instructions, {tag}prefix") + body) + "\n"


ALLXY_PAIRS = ("II", "XX", "YY", "XY", "YX", "xI", "yI", "xy", "yx", "xY", "yX",
               "Xy", "Yx", "xX", "Xx", "yY", "Yy", "XI", "YI", "xx", "yy")
_ALLXY_GATES = {"I": "U(0,0,0)", "X": "U(pi,0,pi)", "Y": "U(pi,pi/2,pi/2)",
                "x": "U(pi/2,-pi/2,pi/2)", "y": "U(pi/2,0,0)"}


def allxy_text() -> str:
    lines = _header(1, 1, "AllXY: 21 gate pairs, each followed by a measurement")
    for pair in ALLXY_PAIRS:
        lines += [f"{_ALLXY_GATES[g]} q[0];" for g in pair]
        lines.append("measure q[0] -> c[0];")
    return "\n".join(lines) + "\n"


def active_reset_text(rounds: int = 3, wait_cycles: int = 60) -> str:
    lines = _header(1, 1, f"active reset, {rounds} rounds")
    for _ in range(rounds):
        lines += ["measure q[0] -> c[0];", f"wait {wait_cycles};", f"if (c[0]==1) {X} q[0];"]
    return "\n".join(lines) + "\n"


def generate(name: str) -> str:
    if name == "bell":
        return bell_text()
    if name in ("bv4", "bv5"):
        return bv_text(int(name[2]))
    if name == "rb":
        return rb_text()
    if name in SURROGATE_SEEDS:
        return surrogate_text(name)
    if name == "bv4_prefix":
        return bv4_prefix_text()
    if name == "bv4_prefix_reordered":
        return bv4_prefix_text(reordered=True)
    if name == "allxy":
        return allxy_text()
    if name == "active_reset":
        return active_reset_text()
    raise KeyError(name)


def names() -> list[str]:
    return list(SHAPES) + ["bell"]


def path(name: str) -> Path:
    return Path(str(files(__name__).joinpath(f"{name}.qasm")))


def load(name: str) -> Program:
    return parse_program(path(name).read_text(encoding="utf-8"), name=name)


def write_all(directory: str | Path | None = None) -> None:
    directory = Path(directory) if directory else Path(__file__).parent
    for name in list(SHAPES) + list(EXTRA):
        (directory / f"{name}.qasm").write_text(generate(name), encoding="utf-8")
