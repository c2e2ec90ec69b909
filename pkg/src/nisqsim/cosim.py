"""Co-simulation: the control model decides order, timing and branches while a
state vector supplies measurement outcomes.

Errors are sampled exactly as in the Monte-Carlo engine, over a layering that
also includes the guarded op of every conditional, and applied right after
their instruction executes. A skipped conditional drops its injections. With
the same seed a straight-line program therefore reproduces the Monte-Carlo
engine's per-trial outcomes.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass

import numpy as np

from .control import ControlConfig, ExecutionStats, MeasureContext, OutcomeSource, simulate
from .montecarlo import MEASURE_STREAM, ErrorTrace, OutputDistribution, generate_traces, trial_rng
from .noise import DeviceErrorModel
from .qasm import CX, Program, Reset, U, layer_all_quantum_ops
from .state import CX_MATRIX, X_MATRIX, StateVector, apply_1q, apply_2q, measure_qubit, u_matrix


class StateVectorOutcome(OutcomeSource):
    """Evolves one trial's state as the control model executes it."""

    def __init__(self, n: int, trace: ErrorTrace, where: dict, operators, seed: int,
                 initial_state: int = 0):
        self.state = StateVector.basis(n, initial_state)
        self.trace = trace
        self.rng = trial_rng(seed, trace.trial_id, MEASURE_STREAM)
        self.mats = [op.matrix for op in operators]
        # program index -> [(qubit, operator index)] in qubit order
        self.pending: dict[int, list[tuple[int, int]]] = {}
        for layer, q, o in trace.injections:
            self.pending.setdefault(where[(layer, q)], []).append((q, o))

    def _inject(self, index: int) -> None:
        for q, o in sorted(self.pending.get(index, ())):
            self.state = apply_1q(self.state, self.mats[o], q)

    def on_op(self, index, op):
        if isinstance(op, U):
            self.state = apply_1q(self.state, u_matrix(op.theta, op.phi, op.lam), op.qubit)
        elif isinstance(op, CX):
            self.state = apply_2q(self.state, CX_MATRIX, op.control, op.target)
        elif isinstance(op, Reset):
            bit, self.state = measure_qubit(self.state, op.qubit, self.rng)
            if bit:
                self.state = apply_1q(self.state, X_MATRIX, op.qubit)
        self._inject(index)

    def next_outcome(self, qubit: int, ctx: MeasureContext) -> int:
        bit, self.state = measure_qubit(self.state, qubit, self.rng)
        return bit ^ (ctx.index in self.trace.flips)


@dataclass(frozen=True)
class CosimResult:
    distribution: OutputDistribution
    stats: tuple[ExecutionStats, ...]  # indexed by trial id

    @property
    def total_times_ns(self) -> list[float]:
        return [s.total_time_ns for s in self.stats]

    @property
    def conditional_fires(self) -> list[int]:
        return [s.conditional_fires for s in self.stats]

    def summary(self) -> dict:
        times = self.total_times_ns
        return {
            "trials": len(times),
            "mean_total_time_ns": statistics.fmean(times),
            "min_total_time_ns": min(times),
            "max_total_time_ns": max(times),
            "mean_conditional_fires": statistics.fmean(self.conditional_fires),
            "counts": self.distribution.counts,
        }


def cosimulate(p: Program, cfg: ControlConfig, m: DeviceErrorModel | None, trials: int,
               seed: int, initial_state: int = 0) -> CosimResult:
    """Run ``trials`` coupled trials. ``initial_state`` is a basis index."""
    p.check()
    if m is None:
        m = DeviceErrorModel.noiseless(p.qubit_count)
    if p.qubit_count > m.qubit_count:
        raise ValueError(f"program needs {p.qubit_count} qubits, error model has {m.qubit_count}")
    circuit = layer_all_quantum_ops(p)
    ts = generate_traces(circuit, m, trials, seed)
    where = {(li, q): op.index for li, op in circuit.ops() for q in op.qubits}
    stats: list[ExecutionStats] = [None] * trials  # type: ignore[list-item]
    for t in ts.traces:
        src = StateVectorOutcome(p.qubit_count, t, where, ts.operators, seed, initial_state)
        stats[t.trial_id] = simulate(p, cfg, src, trial=t.trial_id)
    dist = OutputDistribution(p.cbit_count, tuple(s.register for s in stats))
    return CosimResult(dist, tuple(stats))


def final_qubit_probabilities(p: Program, cfg: ControlConfig, trace: ErrorTrace | None = None,
                              seed: int = 0, initial_state: int = 0,
                              m: DeviceErrorModel | None = None) -> np.ndarray:
    """Basis probabilities of the state left after one trial (for inspection)."""
    m = m or DeviceErrorModel.noiseless(p.qubit_count)
    circuit = layer_all_quantum_ops(p)
    where = {(li, q): op.index for li, op in circuit.ops() for q in op.qubits}
    src = StateVectorOutcome(p.qubit_count, trace or ErrorTrace(0, ()), where, m.operators,
                             seed, initial_state)
    simulate(p, cfg, src)
    a = src.state.amplitudes
    return a.real ** 2 + a.imag ** 2
