"""Latency-accurate behavioral model of the classical control system.

The machine dispatches instructions strictly in program order. Each quantum
operation claims DA (and, for measurement, AD) channels plus its operand
qubits; it starts once all of them are free and at or after the current
dispatch time. Channels are interchangeable and bound to qubits through
switches at no cost, so the scheduler only chooses *how many* and *which*
channels: it takes the required number with the earliest free times (ties
to the lowest index). That choice gives the earliest possible completion
and keeps total time monotone in both channel count and every latency.

All times are integer clock cycles internally and reported in nanoseconds.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .qasm import CX, If, Instruction, Measure, Program, Reset, U, Wait, format_instruction

INF = math.inf


class ControlConfigError(ValueError):
    pass


class UnwrittenCbitWarning(UserWarning):
    pass


def _count(value, what: str):
    if value in ("inf", "infinite", None) or (isinstance(value, float) and math.isinf(value)):
        return INF
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ControlConfigError(f"{what} must be a positive integer or 'inf', got {value!r}")
    return int(value)


@dataclass(frozen=True)
class ControlConfig:
    clock_hz: float = 200e6
    lat_1q: float = 20.0  # ns
    lat_2q: float = 40.0
    lat_meas: float = 300.0
    chan_1q: int = 1
    chan_2q: int = 3
    da_channels: int | float = 3
    ad_channels: int | float = 1
    meas_da: int = 1
    meas_ad: int = 1
    t1: tuple[float, ...] = ()  # seconds per qubit; qubits past the end use default_t1
    default_t1: float = 50e-6
    startup_offset_ns: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "da_channels", _count(self.da_channels, "da_channels"))
        object.__setattr__(self, "ad_channels", _count(self.ad_channels, "ad_channels"))
        object.__setattr__(self, "t1", tuple(float(x) for x in self.t1))
        if not (math.isfinite(self.clock_hz) and self.clock_hz > 0):
            raise ControlConfigError(f"clock_hz must be positive, got {self.clock_hz}")
        for key in ("lat_1q", "lat_2q", "lat_meas", "startup_offset_ns"):
            v = getattr(self, key)
            if not (math.isfinite(v) and v >= 0):
                raise ControlConfigError(f"{key} must be a finite non-negative number, got {v}")
        for key in ("chan_1q", "chan_2q", "meas_da", "meas_ad"):
            v = getattr(self, key)
            if isinstance(v, bool) or int(v) != v or v < 0:
                raise ControlConfigError(f"{key} must be a non-negative integer, got {v!r}")
        for need, key in ((self.chan_1q, "chan_1q"), (self.chan_2q, "chan_2q"), (self.meas_da, "meas_da")):
            if need > self.da_channels:
                raise ControlConfigError(f"{key}={need} exceeds da_channels={self.da_channels}")
        if self.meas_ad > self.ad_channels:
            raise ControlConfigError(f"meas_ad={self.meas_ad} exceeds ad_channels={self.ad_channels}")
        if any(not (math.isfinite(x) and x > 0) for x in self.t1 + (self.default_t1,)):
            raise ControlConfigError("T1 values must be positive and finite")

    @property
    def period_ns(self) -> float:
        return 1e9 / self.clock_hz

    def cycles(self, ns: float) -> int:
        """Whole clock cycles covering ``ns`` (rounded up, float noise ignored)."""
        return max(0, math.ceil(ns / self.period_ns - 1e-9))

    def t1_of(self, q: int) -> float:
        return self.t1[q] if q < len(self.t1) else self.default_t1

    def with_da_channels(self, count) -> "ControlConfig":
        return replace(self, da_channels=count)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("da_channels", "ad_channels"):
            if math.isinf(d[key]):
                d[key] = "inf"
        d["t1"] = list(d["t1"])
        return d


PRESETS: dict[str, ControlConfig] = {
    "qcb-baseline": ControlConfig(name="qcb-baseline"),
    # 2 DA channels cannot host a 3-channel CX, so the two-qubit gate is
    # assumed to take both; readout latency and clock are kept from baseline.
    "ibm-experimental": ControlConfig(lat_1q=50.0, lat_2q=300.0, chan_2q=2, da_channels=2,
                                      ad_channels=2, name="ibm-experimental"),
}

_CONFIG_KEYS = {f for f in ControlConfig.__dataclass_fields__}


def control_from_dict(d: Mapping) -> ControlConfig:
    unknown = set(d) - _CONFIG_KEYS - {"t1_us"}
    if unknown:
        raise ControlConfigError(f"unknown control config keys: {sorted(unknown)}")
    kw = dict(d)
    if "t1_us" in kw:
        if "t1" in kw:
            raise ControlConfigError("give either t1 (seconds) or t1_us, not both")
        kw["t1"] = tuple(x * 1e-6 for x in kw.pop("t1_us"))
    try:
        return ControlConfig(**kw)
    except TypeError as exc:
        raise ControlConfigError(str(exc)) from None


def load_control_config(source) -> ControlConfig:
    """A preset name, a JSON file path, or a mapping of ControlConfig fields."""
    if isinstance(source, ControlConfig):
        return source
    if isinstance(source, Mapping):
        return control_from_dict(source)
    if isinstance(source, str) and source in PRESETS:
        return PRESETS[source]
    path = Path(source)
    if not path.exists():
        raise ControlConfigError(f"no preset or file named {source!r} "
                                 f"(presets: {', '.join(PRESETS)})")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ControlConfigError(f"{path}: {exc}") from None
    if "preset" in data:
        base = load_control_config(data.pop("preset"))
        return control_from_dict({**base.to_dict(), **data})
    return control_from_dict(data)


# ---------------------------------------------------------------------------
# Measurement outcomes


@dataclass(frozen=True)
class MeasureContext:
    trial: int
    index: int  # program index of the measure (or of its enclosing If)
    cbit: int
    time_ns: float


class OutcomeSource:
    """Supplies measurement bits; co-simulation also sees every executed op."""

    def next_outcome(self, qubit: int, ctx: MeasureContext) -> int:
        raise NotImplementedError

    def on_op(self, index: int, op: Instruction) -> None:
        """Called for every executed U, CX and Reset, in dispatch order."""


class ConstantOutcome(OutcomeSource):
    def __init__(self, bit: int = 0):
        if bit not in (0, 1):
            raise ValueError("bit must be 0 or 1")
        self.bit = bit

    def next_outcome(self, qubit, ctx):
        return self.bit


class SeededRandomOutcome(OutcomeSource):
    """Bit 1 with probability ``p``; each draw is keyed by (seed, trial, index),
    so results do not depend on how many runs came before."""

    def __init__(self, p: float = 0.5, seed: int = 0):
        if not 0 <= p <= 1:
            raise ValueError("p must be in [0, 1]")
        self.p, self.seed = p, seed

    def next_outcome(self, qubit, ctx):
        rng = np.random.default_rng([self.seed, ctx.trial, ctx.index, qubit])
        return int(rng.random() < self.p)


# ---------------------------------------------------------------------------
# Simulation


@dataclass(frozen=True)
class InstrRecord:
    index: int
    text: str
    dispatch_ns: float
    start_ns: float
    end_ns: float
    qubits: tuple[int, ...] = ()
    da: tuple[int, ...] = ()
    ad: tuple[int, ...] = ()
    executed: bool = True  # False for an If whose guard did not match
    kind: str = ""

    @property
    def occupies(self) -> bool:
        return self.executed and self.kind in ("U", "CX", "Measure", "Reset")


@dataclass(frozen=True)
class Segment:
    start_ns: float
    end_ns: float
    active: int
    da_busy: int
    ad_busy: int


@dataclass(frozen=True)
class ExecutionStats:
    total_time_ns: float
    period_ns: float
    da_count: int | None  # None when unlimited
    ad_count: int | None
    da_used: int  # channels that ever carried an op
    ad_used: int
    da_busy_ns: tuple[float, ...]
    ad_busy_ns: tuple[float, ...]
    records: tuple[InstrRecord, ...]
    register: int  # final measurement register, cbit 0 least significant
    warnings: tuple[str, ...] = ()
    startup_offset_ns: float = 0.0

    @property
    def program_time_ns(self) -> float:
        return self.total_time_ns - self.startup_offset_ns

    def _util(self, busy):
        span = self.program_time_ns
        if span <= 0:
            return [0.0] * len(busy)
        return [b / span for b in busy]

    @property
    def da_utilization(self) -> list[float]:
        return self._util(self.da_busy_ns)

    @property
    def ad_utilization(self) -> list[float]:
        return self._util(self.ad_busy_ns)

    @property
    def conditional_fires(self) -> int:
        return sum(1 for r in self.records if r.kind.startswith("If:") and r.executed)

    def timeline(self) -> list[Segment]:
        ops = [r for r in self.records if r.occupies and r.end_ns > r.start_ns]
        edges = sorted({0.0, self.program_time_ns} | {r.start_ns for r in ops} | {r.end_ns for r in ops})
        out = []
        for a, b in zip(edges, edges[1:]):
            live = [r for r in ops if r.start_ns <= a < r.end_ns]
            out.append(Segment(a, b, len(live), sum(len(r.da) for r in live),
                               sum(len(r.ad) for r in live)))
        return out

    def to_dict(self) -> dict:
        return {
            "total_time_ns": self.total_time_ns,
            "startup_offset_ns": self.startup_offset_ns,
            "da_channels": self.da_count if self.da_count is not None else "inf",
            "ad_channels": self.ad_count if self.ad_count is not None else "inf",
            "da_busy_ns": list(self.da_busy_ns),
            "ad_busy_ns": list(self.ad_busy_ns),
            "da_utilization": self.da_utilization,
            "ad_utilization": self.ad_utilization,
            "register": self.register,
            "warnings": list(self.warnings),
            "instructions": [
                {"index": r.index, "text": r.text, "dispatch_ns": r.dispatch_ns,
                 "start_ns": r.start_ns, "end_ns": r.end_ns, "qubits": list(r.qubits),
                 "da": list(r.da), "ad": list(r.ad), "executed": r.executed}
                for r in self.records],
        }

    def timeline_csv(self) -> str:
        rows = ["start_ns,end_ns,active,da_busy,ad_busy"]
        rows += [f"{s.start_ns:g},{s.end_ns:g},{s.active},{s.da_busy},{s.ad_busy}" for s in self.timeline()]
        return "\n".join(rows) + "\n"


class _Pool:
    """Interchangeable channels, each free from a given cycle onward."""

    def __init__(self, count):
        self.unlimited = math.isinf(count)
        self.free: list[int] = [] if self.unlimited else [0] * count
        self.busy: list[int] = [0] * len(self.free)

    def pick(self, k: int, earliest: int) -> tuple[list[int], int]:
        if k == 0:
            return [], 0
        if self.unlimited:
            chosen = [i for i, f in enumerate(self.free) if f <= earliest][:k]
            while len(chosen) < k:
                self.free.append(0)
                self.busy.append(0)
                chosen.append(len(self.free) - 1)
            return chosen, earliest
        chosen = sorted(range(len(self.free)), key=lambda i: (self.free[i], i))[:k]
        return sorted(chosen), max(self.free[i] for i in chosen)

    def commit(self, chosen: Sequence[int], start: int, end: int) -> None:
        for i in chosen:
            self.free[i] = end
            self.busy[i] += end - start

    @property
    def used(self) -> int:
        return sum(1 for b in self.busy if b > 0)


@dataclass
class MachineState:
    pc: int = 0
    now: int = 0  # dispatch clock, cycles
    registers: list[int] = field(default_factory=list)
    written_at: list[int | None] = field(default_factory=list)  # end cycle of the last write per cbit
    qubit_free_at: list[int] = field(default_factory=list)


def simulate(p: Program, cfg: ControlConfig, src: OutcomeSource | None = None,
             trial: int = 0) -> ExecutionStats:
    src = src if src is not None else ConstantOutcome(0)
    per = cfg.period_ns
    d1, d2, dm = cfg.cycles(cfg.lat_1q), cfg.cycles(cfg.lat_2q), cfg.cycles(cfg.lat_meas)
    da, ad = _Pool(cfg.da_channels), _Pool(cfg.ad_channels)
    st = MachineState(registers=[0] * p.cbit_count, written_at=[None] * p.cbit_count,
                      qubit_free_at=[0] * p.qubit_count)
    records: list[InstrRecord] = []
    notes: list[str] = []
    last_end = 0

    def run(index: int, op: Instruction, dispatch: int, label: str) -> InstrRecord:
        nonlocal last_end
        if isinstance(op, Wait):
            st.now += op.cycles
            last_end = max(last_end, st.now)
            return InstrRecord(index, label, dispatch * per, dispatch * per, st.now * per, kind="Wait")
        qs = op.qubits
        earliest = max([st.now] + [st.qubit_free_at[q] for q in qs])
        if isinstance(op, U):
            n_da, n_ad, dur = cfg.chan_1q, 0, d1
        elif isinstance(op, CX):
            n_da, n_ad, dur = cfg.chan_2q, 0, d2
        elif isinstance(op, Measure):
            n_da, n_ad, dur = cfg.meas_da, cfg.meas_ad, dm
        elif isinstance(op, Reset):
            n_da, n_ad, dur = 0, 0, cfg.cycles(5 * cfg.t1_of(op.qubit) * 1e9)
        else:
            raise TypeError(f"cannot schedule {op!r}")
        da_ch, da_ready = da.pick(n_da, earliest)
        ad_ch, ad_ready = ad.pick(n_ad, earliest)
        start = max(earliest, da_ready, ad_ready)
        end = start + dur
        da.commit(da_ch, start, end)
        ad.commit(ad_ch, start, end)
        for q in qs:
            st.qubit_free_at[q] = end
        last_end = max(last_end, end)
        if isinstance(op, Measure):
            ctx = MeasureContext(trial, index, op.cbit, end * per)
            st.registers[op.cbit] = int(src.next_outcome(op.qubit, ctx)) & 1
            st.written_at[op.cbit] = end
        else:
            src.on_op(index, op)
        return InstrRecord(index, label, dispatch * per, start * per, end * per, qs,
                           tuple(da_ch), tuple(ad_ch), kind=type(op).__name__)

    for index, ins in enumerate(p.instructions):
        st.pc = index
        dispatch = st.now
        text = format_instruction(ins)
        if isinstance(ins, If):
            ready = st.written_at[ins.cbit]
            if ready is None:
                msg = f"instruction {index}: c[{ins.cbit}] read before any measurement wrote it; reading 0"
                notes.append(msg)
                warnings.warn(msg, UnwrittenCbitWarning, stacklevel=2)
            else:
                st.now = max(st.now, ready)
            kind = "If:" + type(ins.inner).__name__
            if st.registers[ins.cbit] != ins.value:
                records.append(InstrRecord(index, text, dispatch * per, st.now * per, st.now * per,
                                           executed=False, kind=kind))
                continue
            rec = run(index, ins.inner, dispatch, text)
            records.append(replace(rec, kind=kind))
        else:
            records.append(run(index, ins, dispatch, text))

    span = max(last_end, st.now) * per
    register = sum(b << i for i, b in enumerate(st.registers))
    return ExecutionStats(
        total_time_ns=cfg.startup_offset_ns + span, period_ns=per,
        da_count=None if da.unlimited else len(da.free),
        ad_count=None if ad.unlimited else len(ad.free),
        da_used=da.used, ad_used=ad.used,
        da_busy_ns=tuple(b * per for b in da.busy), ad_busy_ns=tuple(b * per for b in ad.busy),
        records=tuple(records), register=register, warnings=tuple(notes),
        startup_offset_ns=cfg.startup_offset_ns)


# ---------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class UtilizationRow:
    start_ns: float
    end_ns: float
    da_utilization: float  # fraction of channel-time busy, 0..1
    ad_utilization: float
    active: int  # most instructions executing at once inside the window


def _overlap(a0, a1, b0, b1) -> float:
    return max(0.0, min(a1, b1) - max(a0, b0))


def utilization_report(stats: ExecutionStats, window_ns: float | None = None,
                       boundaries: Sequence[float] | None = None) -> list[UtilizationRow]:
    """Per-window channel utilization and peak instruction count.

    Windows are either fixed-width from 0 (the last one truncated at the end
    of the program) or given as explicit edges. Times are program times,
    without the startup offset. With unlimited channels utilization is
    measured against the channels actually used.
    """
    if (window_ns is None) == (boundaries is None):
        raise ValueError("give exactly one of window_ns or boundaries")
    if boundaries is not None:
        edges = [float(b) for b in boundaries]
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("boundaries must be strictly increasing with at least two edges")
    else:
        if not window_ns > 0:
            raise ValueError("window_ns must be positive")
        end = stats.program_time_ns
        n = max(1, math.ceil(end / window_ns - 1e-9))
        edges = [min(i * window_ns, end) if i == n else i * window_ns for i in range(n + 1)]
        if edges[-1] <= edges[-2]:
            edges[-1] = edges[-2] + window_ns
    n_da = stats.da_count if stats.da_count is not None else stats.da_used
    n_ad = stats.ad_count if stats.ad_count is not None else stats.ad_used
    ops = [r for r in stats.records if r.occupies]
    segs = stats.timeline()
    rows = []
    for a, b in zip(edges, edges[1:]):
        width = b - a
        da_busy = sum(len(r.da) * _overlap(r.start_ns, r.end_ns, a, b) for r in ops)
        ad_busy = sum(len(r.ad) * _overlap(r.start_ns, r.end_ns, a, b) for r in ops)
        active = max((s.active for s in segs if _overlap(s.start_ns, s.end_ns, a, b) > 0), default=0)
        rows.append(UtilizationRow(a, b, da_busy / (n_da * width) if n_da else 0.0,
                                   ad_busy / (n_ad * width) if n_ad else 0.0, active))
    return rows


@dataclass(frozen=True)
class SweepRow:
    da_channels: int | float
    total_ns: float
    total_no_measure_ns: float


def channel_sweep(p: Program, cfg: ControlConfig, da_counts: Sequence,
                  src: OutcomeSource | None = None) -> list[SweepRow]:
    """Total time at each DA channel count, with and without measurements."""
    stripped = p.without_measurements()
    rows = []
    for count in da_counts:
        c = cfg.with_da_channels(count)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnwrittenCbitWarning)
            t = simulate(p, c, src).total_time_ns
            t0 = simulate(stripped, c, src).total_time_ns
        rows.append(SweepRow(c.da_channels, t, t0))
    return rows


def saturation_count(rows: Sequence[SweepRow]) -> int | float | None:
    """Smallest finite count already matching the unlimited-channel time."""
    target = [r.total_ns for r in rows if math.isinf(r.da_channels)]
    if not target:
        return None
    hits = [r.da_channels for r in rows if not math.isinf(r.da_channels) and r.total_ns == target[0]]
    return min(hits) if hits else None
