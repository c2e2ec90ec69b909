"""Monte-Carlo error-injection simulation with shared-prefix reuse.

Every trial is first sampled as an :class:`ErrorTrace` (which operator lands
where), without simulating anything. Two trials compute the same state
vector up to the first point where their injections differ, so executing
trials in lexicographic order of their injection lists lets each one resume
from a stored checkpoint instead of the initial state.

Execution order within a layer is fixed: the layer's gates in program order,
then that layer's injections in ascending qubit order. The optimized and
brute-force engines perform the identical operation sequence per trial and
key the measurement RNG by trial id, so their per-trial outcomes agree bit
for bit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .noise import DeviceErrorModel, ErrorOperator, error_positions, select_operators
from .qasm import CX, LayeredCircuit, Measure, Reset, U, UnsupportedForNoisySimulation
from .state import CX_MATRIX, StateVector, apply_1q, apply_2q, measure_qubit, u_matrix

INJECT_STREAM = 0
MEASURE_STREAM = 1

_END = (math.inf,)  # sorts after every (layer, qubit, op) injection


def trial_rng(seed: int, trial: int, stream: int) -> np.random.Generator:
    """Counter-based substream for one trial, independent of execution order."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ErrorTrace:
    trial_id: int
    injections: tuple[tuple[int, int, int], ...]  # (layer, qubit, operator index)
    flips: frozenset = frozenset()  # program indices of measurements whose bit flips

    @property
    def order_key(self):
        return self.injections + (_END, self.trial_id)

    @property
    def error_free(self) -> bool:
        return not self.injections and not self.flips


def order_traces(traces: Iterable[ErrorTrace]) -> list[ErrorTrace]:
    """Earliest first injection first; traces sharing an injection prefix stay
    contiguous, and a trace that stops injecting follows the ones that branch
    further from the same prefix."""
    return sorted(traces, key=lambda t: t.order_key)


@dataclass(frozen=True)
class TraceSet:
    traces: tuple[ErrorTrace, ...]
    seed: int
    circuit: LayeredCircuit
    operators: tuple[ErrorOperator, ...]

    def __len__(self) -> int:
        return len(self.traces)

    def in_generation_order(self) -> list[ErrorTrace]:
        return sorted(self.traces, key=lambda t: t.trial_id)

    def error_free_fraction(self) -> float:
        return sum(t.error_free for t in self.traces) / len(self.traces)

    def max_shared_prefix(self) -> int:
        """Longest injection prefix shared by any two traces (neighbours in order suffice)."""
        best = 0
        for a, b in zip(self.traces, self.traces[1:]):
            k = 0
            for x, y in zip(a.injections, b.injections):
                if x != y:
                    break
                k += 1
            best = max(best, k)
        return best


def generate_traces(c: LayeredCircuit, m: DeviceErrorModel, trials: int, seed: int) -> TraceSet:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    positions = error_positions(c, m)
    rates = np.array([p.rate for p in positions], dtype=float)
    readout = np.array([p.readout for p in positions], dtype=bool)
    cdf = m.operator_cdf
    traces = []
    for i in range(trials):
        u = trial_rng(seed, i, INJECT_STREAM).random(len(positions))
        sel = select_operators(u, rates, cdf)
        injections = []
        flips = []
        for j in np.flatnonzero(sel >= 0):
            p = positions[j]
            if readout[j]:
                flips.append(p.source)
            else:
                injections.append((p.layer, p.qubit, int(sel[j])))
        traces.append(ErrorTrace(i, tuple(injections), frozenset(flips)))
    return TraceSet(tuple(order_traces(traces)), seed, c, m.operators)


# ---------------------------------------------------------------------------
# Results


@dataclass
class SimMetrics:
    matvec_count: int
    msv_peak: int
    trials: int


@dataclass
class OutputDistribution:
    cbit_count: int
    per_trial: tuple[int, ...]  # register value of each trial, indexed by trial id
    counts: dict[str, int] = field(init=False)

    def __post_init__(self):
        counts: dict[str, int] = {}
        for reg in self.per_trial:
            key = self.bitstring(reg)
            counts[key] = counts.get(key, 0) + 1
        self.counts = dict(sorted(counts.items()))

    @classmethod
    def from_counts(cls, counts: dict[str, int]) -> "OutputDistribution":
        width = {len(k) for k in counts}
        if len(width) != 1:
            raise ValueError("bitstrings must share one width")
        regs = [int(k, 2) for k, v in sorted(counts.items()) for _ in range(v)]
        return cls(width.pop(), tuple(regs))

    @property
    def trials(self) -> int:
        return len(self.per_trial)

    def bitstring(self, reg: int) -> str:
        return format(reg, f"0{self.cbit_count}b") if self.cbit_count else ""

    def probabilities(self) -> np.ndarray:
        """Dense vector indexed by register value (cbit 0 = least significant)."""
        vec = np.zeros(1 << self.cbit_count)
        for reg in self.per_trial:
            vec[reg] += 1
        return vec / self.trials


def fidelity(observed: OutputDistribution, reference) -> float:
    """Fraction of trials whose outcome lies in the reference.

    ``reference`` is a bitstring (exact match) or a probability vector over
    register values (mass on its support).
    """
    if isinstance(reference, str):
        if len(reference) != observed.cbit_count:
            raise ValueError(f"reference {reference!r} has width {len(reference)}, "
                             f"outcomes have {observed.cbit_count}")
        return observed.counts.get(reference, 0) / observed.trials
    ref = np.asarray(reference, dtype=float)
    if ref.shape != (1 << observed.cbit_count,):
        raise ValueError(f"reference has {ref.size} entries, expected {1 << observed.cbit_count}")
    return float(observed.probabilities()[ref > 0].sum())


def total_variation(observed: OutputDistribution, reference) -> float:
    ref = np.asarray(reference, dtype=float)
    if ref.shape != (1 << observed.cbit_count,):
        raise ValueError(f"reference has {ref.size} entries, expected {1 << observed.cbit_count}")
    return 0.5 * float(np.abs(observed.probabilities() - ref).sum())


# ---------------------------------------------------------------------------
# Engines


@dataclass(frozen=True)
class _Compiled:
    n: int
    cbits: int
    depth: int
    layers: tuple[tuple[tuple[np.ndarray, tuple[int, ...]], ...], ...]
    measures: tuple[tuple[int, int, int], ...]  # (program index, qubit, cbit) in program order
    gate_count: int


def _compile(c: LayeredCircuit) -> _Compiled:
    layers = []
    measures = []
    last_layer = {}
    for li, layer in enumerate(c.layers):
        gates = []
        for op in layer:
            ins = op.instr
            for q in ins.qubits:
                last_layer[q] = li
            if isinstance(ins, U):
                gates.append((u_matrix(ins.theta, ins.phi, ins.lam), (ins.qubit,)))
            elif isinstance(ins, CX):
                gates.append((CX_MATRIX, (ins.control, ins.target)))
            elif isinstance(ins, Measure):
                measures.append((op.index, ins.qubit, ins.cbit, li))
            elif isinstance(ins, Reset):
                raise UnsupportedForNoisySimulation(
                    f"reset at instruction {op.index}: use co-simulation for programs with reset")
            else:
                raise UnsupportedForNoisySimulation(f"instruction {op.index} is not a quantum op")
        layers.append(tuple(gates))
    for idx, q, _, li in measures:
        if last_layer[q] != li:
            raise UnsupportedForNoisySimulation(
                f"measurement at instruction {idx} is followed by more operations on q[{q}]; "
                "mid-circuit measurement needs co-simulation")
    measures.sort()
    gate_count = sum(len(l) for l in layers)
    return _Compiled(c.qubit_count, c.cbit_count, len(layers), tuple(layers),
                     tuple((i, q, b) for i, q, b, _ in measures), gate_count)


def _apply_layer(state: StateVector, gates) -> StateVector:
    for g, qs in gates:
        state = apply_1q(state, g, qs[0]) if len(qs) == 1 else apply_2q(state, g, qs[0], qs[1])
    return state


def _readout(state: StateVector, comp: _Compiled, flips: frozenset, seed: int, trial: int) -> int:
    rng = trial_rng(seed, trial, MEASURE_STREAM)
    reg = 0
    for idx, q, cb in comp.measures:
        bit, state = measure_qubit(state, q, rng)
        if idx in flips:
            bit ^= 1
        reg = (reg & ~(1 << cb)) | (bit << cb)
    return reg


def _check_traces(ts: TraceSet, comp: _Compiled) -> None:
    for t in ts.traces:
        for layer, q, o in t.injections:
            if not 0 <= layer < comp.depth:
                raise ValueError(f"trace {t.trial_id} injects at layer {layer}, "
                                 f"circuit depth is {comp.depth}")
            if not 0 <= q < comp.n or not 0 <= o < len(ts.operators):
                raise ValueError(f"trace {t.trial_id} has a bad injection {(layer, q, o)}")


def _finish(per_trial: dict[int, int], comp: _Compiled, matvecs: int, msv: int):
    outcomes = tuple(per_trial[i] for i in sorted(per_trial))
    dist = OutputDistribution(comp.cbits, outcomes)
    return dist, SimMetrics(matvecs, msv, len(outcomes))


def run_bruteforce(ts: TraceSet) -> tuple[OutputDistribution, SimMetrics]:
    """Every trial from |0...0>; one working vector at a time."""
    comp = _compile(ts.circuit)
    _check_traces(ts, comp)
    mats = [op.matrix for op in ts.operators]
    per_trial = {}
    matvecs = 0
    for t in ts.in_generation_order():
        state = StateVector.zero(comp.n)
        pending = list(t.injections)
        k = 0
        for li in range(comp.depth):
            state = _apply_layer(state, comp.layers[li])
            while k < len(pending) and pending[k][0] == li:
                _, q, o = pending[k]
                state = apply_1q(state, mats[o], q)
                k += 1
        matvecs += state.matvecs
        per_trial[t.trial_id] = _readout(state, comp, t.flips, ts.seed, t.trial_id)
    return _finish(per_trial, comp, matvecs, 1)


def _plan(order: Sequence[ErrorTrace], depth: int):
    """Resume point of each trace and the last trace needing each point.

    A point is ``(injection prefix, layers done)``. Trace j resumes from the
    deepest point it shares with any earlier trace: walk its prefixes while an
    earlier trace had the same one, then go as far along that prefix as some
    earlier trace got before its next injection.
    """
    reach: dict[tuple, int] = {}
    resume: list = []
    last_use: dict[tuple, int] = {}
    for j, t in enumerate(order):
        inj = t.injections
        m = len(inj)
        if j == 0:
            resume.append(None)
        else:
            k = 0
            while k < m and inj[:k + 1] in reach:
                k += 1
            nxt = inj[k][0] + 1 if k < m else depth
            point = (inj[:k], min(reach[inj[:k]], nxt))
            resume.append(point)
            last_use[point] = j
        for k in range(m + 1):
            nxt = inj[k][0] + 1 if k < m else depth
            prefix = inj[:k]
            if reach.get(prefix, -1) < nxt:
                reach[prefix] = nxt
    return resume, last_use


def run_optimized(ts: TraceSet, reorder: bool = True) -> tuple[OutputDistribution, SimMetrics]:
    """Prefix-sharing execution.

    With ``reorder=False`` trials run in generation order (a debugging mode
    used to measure how much memory the ordering saves); results are the same,
    only the number of simultaneously stored checkpoints changes.
    """
    comp = _compile(ts.circuit)
    _check_traces(ts, comp)
    mats = [op.matrix for op in ts.operators]
    order = list(ts.traces) if reorder else ts.in_generation_order()
    resume, last_use = _plan(order, comp.depth)

    store: dict[tuple, StateVector] = {}
    peak = 0
    matvecs = 0
    per_trial = {}
    for j, t in enumerate(order):
        inj = t.injections
        m = len(inj)
        prefixes = [inj[:k] for k in range(m + 1)]
        point = resume[j]
        if point is None:
            state, k, layer = StateVector.zero(comp.n), 0, 0
        else:
            state = store[point]
            if last_use[point] == j:
                del store[point]
            k, layer = len(point[0]), point[1]
        start = state.matvecs

        def keep(key):
            nonlocal peak
            if last_use.get(key, -1) > j and key not in store:
                store[key] = state
                peak = max(peak, len(store))

        while True:
            while k < m and inj[k][0] == layer - 1:
                _, q, o = inj[k]
                state = apply_1q(state, mats[o], q)
                k += 1
                keep((prefixes[k], layer))
            if layer == comp.depth:
                break
            state = _apply_layer(state, comp.layers[layer])
            layer += 1
            keep((prefixes[k], layer))
        matvecs += state.matvecs - start
        per_trial[t.trial_id] = _readout(state, comp, t.flips, ts.seed, t.trial_id)
    return _finish(per_trial, comp, matvecs, max(1, peak))


# ---------------------------------------------------------------------------
# Reference results


def _embed(g: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Dense 2**n operator for ``g`` on ``qubits`` (first qubit most significant locally)."""
    dim = 1 << n
    k = len(qubits)
    full = np.zeros((dim, dim), dtype=complex)
    mask = sum(1 << q for q in qubits)
    for col in range(dim):
        local_in = 0
        for q in qubits:
            local_in = (local_in << 1) | ((col >> q) & 1)
        rest = col & ~mask
        for local_out in range(1 << k):
            row = rest
            for pos, q in enumerate(qubits):
                if (local_out >> (k - 1 - pos)) & 1:
                    row |= 1 << q
            full[row, col] = g[local_out, local_in]
    return full


def _register_distribution(probs: np.ndarray, measures, cbits: int, flip_probs=None) -> np.ndarray:
    """Map basis probabilities to register values, then apply independent bit flips."""
    out = np.zeros(1 << cbits)
    for basis, p in enumerate(probs):
        if p == 0:
            continue
        reg = 0
        for _, q, cb in measures:
            reg = (reg & ~(1 << cb)) | (((basis >> q) & 1) << cb)
        out[reg] += p
    # a flip only matters on the final write to each classical bit
    final_writer = {}
    for idx, _, cb in measures:
        final_writer[cb] = idx
    for cb, idx in final_writer.items():
        r = (flip_probs or {}).get(idx, 0.0)
        if r:
            flipped = out[np.arange(out.size) ^ (1 << cb)]
            out = (1 - r) * out + r * flipped
    return out


def ideal_distribution(c: LayeredCircuit) -> np.ndarray:
    """Noise-free probability of every register value."""
    comp = _compile(c)
    state = StateVector.zero(comp.n)
    for gates in comp.layers:
        state = _apply_layer(state, gates)
    a = state.amplitudes
    return _register_distribution(a.real ** 2 + a.imag ** 2, comp.measures, comp.cbits)


def ideal_bitstring(c: LayeredCircuit) -> str:
    dist = ideal_distribution(c)
    return format(int(np.argmax(dist)), f"0{c.cbit_count}b")


def exact_noisy_oracle(c: LayeredCircuit, m: DeviceErrorModel, max_positions: int = 12) -> np.ndarray:
    """Exact noisy output distribution by enumerating every injection assignment.

    Built on dense 2**n operators, independently of the gate-application code
    path the engines use. Readout flips are folded in exactly afterwards.
    """
    comp = _compile(c)
    positions = error_positions(c, m)
    quantum = [p for p in positions if not p.readout]
    flip_probs = {p.source: p.rate for p in positions if p.readout}
    n_ops = len(m.operators)
    if len(positions) > max_positions or (n_ops + 1) ** len(quantum) > 4 ** max_positions:
        raise ValueError(f"{len(positions)} error positions is too many to enumerate")

    n = comp.n
    layer_ops = []
    for gates in comp.layers:
        mat = np.eye(1 << n, dtype=complex)
        for g, qs in gates:
            mat = _embed(g, qs, n) @ mat
        layer_ops.append(mat)
    op_mats = {(q, o): _embed(m.operators[o].matrix, (q,), n)
               for q in range(n) for o in range(n_ops)}
    probs_per_op = m.operator_probabilities(1.0)

    by_layer: dict[int, list] = {}
    for idx, p in enumerate(quantum):
        by_layer.setdefault(p.layer, []).append(idx)

    psi0 = np.zeros(1 << n, dtype=complex)
    psi0[0] = 1
    total = np.zeros(1 << n)
    for choice in itertools.product(range(-1, n_ops), repeat=len(quantum)):
        weight = 1.0
        for p, o in zip(quantum, choice):
            weight *= (1 - p.rate) if o < 0 else p.rate * probs_per_op[o]
        if weight == 0:
            continue
        psi = psi0
        for li, mat in enumerate(layer_ops):
            psi = mat @ psi
            for idx in by_layer.get(li, ()):
                if choice[idx] >= 0:
                    psi = op_mats[(quantum[idx].qubit, choice[idx])] @ psi
        total += weight * np.abs(psi) ** 2
    return _register_distribution(total, comp.measures, comp.cbits, flip_probs)


def binomial_sigma(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / trials)


def within_sigma(observed: OutputDistribution, exact: np.ndarray, sigmas: float = 3.0) -> bool:
    """True when every outcome frequency sits within ``sigmas`` binomial sd of ``exact``."""
    obs = observed.probabilities()
    for o, p in zip(obs, exact):
        sd = binomial_sigma(p, observed.trials)
        if abs(o - p) > sigmas * sd + 1e-12:
            return False
    return True


def savings(brute: SimMetrics, opt: SimMetrics) -> float:
    return 1.0 - opt.matvec_count / brute.matvec_count if brute.matvec_count else 0.0
