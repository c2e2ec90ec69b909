"""Device error characteristics, error positions, and injection sampling.

A gate error rate ``r`` is read as a depolarizing channel: each operator of
the model's operator set fires with probability ``r * w / sum(w)`` (``r/3``
for the default equal-weight X, Y, Z), and nothing happens with probability
``1 - r``. Readout error is a classical flip of the recorded bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .qasm import CX, LayeredCircuit, Measure, Reset, U
from .state import I_MATRIX, X_MATRIX, Y_MATRIX, Z_MATRIX, is_unitary


class DeviceConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ErrorOperator:
    label: str
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise DeviceConfigError(f"operator {self.label!r} must be 2x2")
        if not is_unitary(m):
            raise DeviceConfigError(f"operator {self.label!r} is not unitary")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __eq__(self, other):
        return (isinstance(other, ErrorOperator) and self.label == other.label
                and np.array_equal(self.matrix, other.matrix))

    def __hash__(self):
        return hash(self.label)


PAULI_X = ErrorOperator("X", X_MATRIX)
PAULI_Y = ErrorOperator("Y", Y_MATRIX)
PAULI_Z = ErrorOperator("Z", Z_MATRIX)
PAULIS = (PAULI_X, PAULI_Y, PAULI_Z)

# returned by sample_injection for a readout position that fires
FLIP = "flip"


def _edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _check_prob(value: float, what: str) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise DeviceConfigError(f"{what} = {value} is not a probability")
    return value


@dataclass(frozen=True)
class DeviceErrorModel:
    qubit_count: int
    edges: frozenset
    gate1_error: tuple[float, ...]
    cx_error: Mapping[tuple[int, int], float]
    readout_error: tuple[float, ...]
    t1: tuple[float, ...]  # seconds
    operators: tuple[ErrorOperator, ...] = PAULIS
    weights: tuple[float, ...] = (1.0, 1.0, 1.0)
    name: str = ""

    def __post_init__(self):
        n = self.qubit_count
        if n < 1:
            raise DeviceConfigError("qubit count must be positive")
        edges = frozenset(_edge(*e) for e in self.edges)
        for a, b in edges:
            if a == b or not (0 <= a < n and 0 <= b < n):
                raise DeviceConfigError(f"edge ({a},{b}) references an unknown qubit")
        object.__setattr__(self, "edges", edges)
        for attr in ("gate1_error", "readout_error", "t1"):
            vals = tuple(float(v) for v in getattr(self, attr))
            if len(vals) != n:
                raise DeviceConfigError(f"{attr} needs {n} entries, got {len(vals)}")
            object.__setattr__(self, attr, vals)
        for q, r in enumerate(self.gate1_error):
            _check_prob(r, f"gate1_error[{q}]")
        for q, r in enumerate(self.readout_error):
            _check_prob(r, f"readout_error[{q}]")
        if any(not t > 0 for t in self.t1):
            raise DeviceConfigError("t1 values must be positive")
        cx = {}
        for e, r in dict(self.cx_error).items():
            e = _edge(*e)
            if e not in edges:
                raise DeviceConfigError(f"cx_error given for ({e[0]},{e[1]}) which is not an edge")
            cx[e] = _check_prob(r, f"cx_error[{e[0]}-{e[1]}]")
        for e in edges:
            cx.setdefault(e, 0.0)
        object.__setattr__(self, "cx_error", cx)
        if len(self.operators) != len(self.weights) or not self.operators:
            raise DeviceConfigError("operators and weights must be non-empty and the same length")
        if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
            raise DeviceConfigError("operator weights must be non-negative with a positive sum")
        labels = [op.label for op in self.operators]
        if len(set(labels)) != len(labels):
            raise DeviceConfigError("operator labels must be unique")
        object.__setattr__(self, "operators", tuple(self.operators))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    def has_edge(self, a: int, b: int) -> bool:
        return _edge(a, b) in self.edges

    def edge_error(self, a: int, b: int) -> float:
        try:
            return self.cx_error[_edge(a, b)]
        except KeyError:
            raise KeyError(f"({a},{b}) is not a coupling edge") from None

    @property
    def operator_cdf(self) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float)
        return np.cumsum(w) / w.sum()

    def operator_probabilities(self, rate: float) -> tuple[float, ...]:
        w = np.asarray(self.weights, dtype=float)
        return tuple(rate * w / w.sum())

    @classmethod
    def uniform(cls, qubit_count: int, rate: float, edges=None, readout: float | None = None,
                t1: float = math.inf) -> "DeviceErrorModel":
        """Same rate on every gate, edge, and (unless given) readout. Default edges: all pairs."""
        if edges is None:
            edges = [(a, b) for a in range(qubit_count) for b in range(a + 1, qubit_count)]
        edges = [_edge(*e) for e in edges]
        readout = rate if readout is None else readout
        return cls(qubit_count, frozenset(edges), (rate,) * qubit_count,
                   {e: rate for e in edges}, (readout,) * qubit_count, (t1,) * qubit_count,
                   name=f"uniform-{rate:g}")

    @classmethod
    def noiseless(cls, qubit_count: int, edges=None) -> "DeviceErrorModel":
        return cls.uniform(qubit_count, 0.0, edges)


def _parse_operator(doc: Mapping[str, Any]) -> tuple[ErrorOperator, float]:
    label = doc.get("label")
    if not isinstance(label, str) or not label:
        raise DeviceConfigError("operator needs a label")
    if "matrix" in doc:
        vals = [float(v) for v in doc["matrix"]]
        if len(vals) != 8:
            raise DeviceConfigError(f"operator {label!r}: matrix needs 8 reals")
        m = np.array([complex(vals[i], vals[i + 1]) for i in range(0, 8, 2)]).reshape(2, 2)
    else:
        builtin = {"X": X_MATRIX, "Y": Y_MATRIX, "Z": Z_MATRIX, "I": I_MATRIX}
        if label not in builtin:
            raise DeviceConfigError(f"operator {label!r} needs a matrix")
        m = builtin[label]
    return ErrorOperator(label, m), float(doc.get("weight", 1.0))


def device_from_dict(doc: Mapping[str, Any]) -> DeviceErrorModel:
    """Build a model from a config mapping.

    Keys: ``qubits``, ``edges`` ([[i, j], ...]), ``gate1_error`` (list),
    ``cx_error`` ({"i-j": r}), optional ``readout_error`` (default 0),
    ``t1_us`` (default infinite) and ``operators``
    ([{label, matrix: [re, im] x 4, weight}]).
    """
    if not isinstance(doc, Mapping):
        raise DeviceConfigError("device config must be a mapping")
    try:
        n = int(doc["qubits"])
        edges = [tuple(int(x) for x in e) for e in doc.get("edges", [])]
        if any(len(e) != 2 for e in edges):
            raise DeviceConfigError("each edge needs exactly two qubits")
        gate1 = doc.get("gate1_error", [0.0] * n)
        cx = {}
        for key, r in doc.get("cx_error", {}).items():
            a, b = (int(x) for x in str(key).split("-"))
            cx[(a, b)] = r
        readout = doc.get("readout_error", [0.0] * n)
        t1 = [float(t) * 1e-6 for t in doc["t1_us"]] if "t1_us" in doc else [math.inf] * n
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DeviceConfigError):
            raise
        raise DeviceConfigError(f"malformed device config: {exc}") from exc
    extra = {}
    if "operators" in doc:
        parsed = [_parse_operator(o) for o in doc["operators"]]
        extra = dict(operators=tuple(p[0] for p in parsed), weights=tuple(p[1] for p in parsed))
    return DeviceErrorModel(n, frozenset(edges), tuple(gate1), cx, tuple(readout), tuple(t1),
                            name=str(doc.get("name", "")), **extra)


def load_device_model(path_or_doc) -> DeviceErrorModel:
    if isinstance(path_or_doc, Mapping):
        return device_from_dict(path_or_doc)
    path = Path(path_or_doc)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DeviceConfigError(f"{path}: {exc}") from exc
    model = device_from_dict(doc)
    if not model.name:
        object.__setattr__(model, "name", path.stem)
    return model


def device_to_dict(m: DeviceErrorModel) -> dict:
    doc = {
        "name": m.name,
        "qubits": m.qubit_count,
        "edges": sorted([list(e) for e in m.edges]),
        "gate1_error": list(m.gate1_error),
        "cx_error": {f"{a}-{b}": r for (a, b), r in sorted(m.cx_error.items())},
        "readout_error": list(m.readout_error),
    }
    if all(math.isfinite(t) for t in m.t1):
        doc["t1_us"] = [t * 1e6 for t in m.t1]
    if m.operators != PAULIS or m.weights != (1.0, 1.0, 1.0):
        doc["operators"] = [
            {"label": op.label, "weight": w,
             "matrix": [v for z in op.matrix.reshape(-1) for v in (z.real, z.imag)]}
            for op, w in zip(m.operators, m.weights)]
    return doc


def yorktown() -> DeviceErrorModel:
    """The illustrative 5-qubit bow-tie model shipped with the package."""
    from importlib.resources import files
    doc = json.loads(files("nisqsim.data").joinpath("yorktown.json").read_text(encoding="utf-8"))
    return device_from_dict(doc)


# ---------------------------------------------------------------------------
# Positions and sampling


@dataclass(frozen=True)
class ErrorPosition:
    layer: int
    qubit: int
    source: int  # program index of the gate or measurement owning this slot
    rate: float
    readout: bool = False  # classical flip of the measured bit instead of an operator
    cbit: int = -1


def error_positions(c: LayeredCircuit, m: DeviceErrorModel) -> list[ErrorPosition]:
    """One slot per (gate, operand qubit) and per measurement, ordered by (layer, qubit)."""
    out: list[ErrorPosition] = []
    for li, op in c.ops():
        ins = op.instr
        if isinstance(ins, U):
            out.append(ErrorPosition(li, ins.qubit, op.index, m.gate1_error[ins.qubit]))
        elif isinstance(ins, CX):
            r = m.edge_error(ins.control, ins.target)
            out.append(ErrorPosition(li, ins.control, op.index, r))
            out.append(ErrorPosition(li, ins.target, op.index, r))
        elif isinstance(ins, Measure):
            out.append(ErrorPosition(li, ins.qubit, op.index, m.readout_error[ins.qubit],
                                     readout=True, cbit=ins.cbit))
        elif isinstance(ins, Reset):
            continue
    out.sort(key=lambda p: (p.layer, p.qubit))
    return out


def select_operators(u: np.ndarray, rates: np.ndarray, cdf: np.ndarray) -> np.ndarray:
    """Map uniforms to operator indices; -1 where nothing is injected.

    ``u < rate`` fires, and ``u / rate`` then picks the operator through the
    normalized weight CDF, so one uniform decides both.
    """
    u = np.asarray(u, dtype=float)
    rates = np.asarray(rates, dtype=float)
    hit = u < rates
    out = np.full(u.shape, -1, dtype=np.int64)
    if hit.any():
        scaled = u[hit] / rates[hit]
        idx = np.searchsorted(cdf, scaled, side="right")
        out[hit] = np.minimum(idx, len(cdf) - 1)
    return out


def sample_injection(pos: ErrorPosition, model: DeviceErrorModel, rng: np.random.Generator):
    """Draw the injection for one position: an ErrorOperator, FLIP, or None."""
    u = np.array([rng.random()])
    if pos.readout:
        return FLIP if u[0] < pos.rate else None
    idx = int(select_operators(u, np.array([pos.rate]), model.operator_cdf)[0])
    return None if idx < 0 else model.operators[idx]
