import json
import math

import pytest

from nisqsim import benchmarks
from nisqsim.control import (PRESETS, ConstantOutcome, ControlConfig, ControlConfigError,
                             SeededRandomOutcome, UnwrittenCbitWarning, channel_sweep,
                             load_control_config, saturation_count, simulate, utilization_report)
from nisqsim.qasm import CX, If, Measure, Program, Reset, U, Wait, parse_program

BASE = PRESETS["qcb-baseline"]


def u(q):
    return U(0, 0, 0, q)


def test_defaults():
    c = ControlConfig()
    assert (c.clock_hz, c.lat_1q, c.lat_2q, c.lat_meas) == (200e6, 20, 40, 300)
    assert (c.chan_1q, c.chan_2q, c.da_channels, c.ad_channels) == (1, 3, 3, 1)
    assert c.period_ns == 5.0 and c.cycles(20) == 4


def test_bv4_prefix():
    s = simulate(benchmarks.load("bv4_prefix"), BASE)
    assert s.total_time_ns == 60
    spans = [(r.start_ns, r.end_ns) for r in s.records]
    assert spans == [(0, 20), (0, 20), (0, 20), (20, 40), (40, 60)]


def test_bv4_prefix_reordered():
    assert simulate(benchmarks.load("bv4_prefix_reordered"), BASE).total_time_ns == 40


def test_allxy():
    p = benchmarks.load("allxy")
    assert len(p) == 63 and p.count(Measure) == 21
    assert simulate(p, BASE).total_time_ns == 21 * (2 * 20 + 300) == 7140


def test_empty_program():
    cfg = ControlConfig(startup_offset_ns=130)
    s = simulate(Program(1, 0, ()), cfg)
    assert s.total_time_ns == 130 and s.records == ()


def test_cx_takes_three_channels_together():
    s = simulate(Program(2, 0, (CX(0, 1),)), BASE)
    r = s.records[0]
    assert r.da == (0, 1, 2) and (r.start_ns, r.end_ns) == (0, 40)


def test_measure_uses_da_and_ad():
    s = simulate(Program(2, 2, (Measure(0, 0), Measure(1, 1))), BASE)
    a, b = s.records
    assert len(a.da) == 1 and a.ad == (0,)
    assert (b.start_ns, b.end_ns) == (300, 600)  # one AD channel serializes readout
    assert s.total_time_ns == 600


def test_qubit_dependency_serializes():
    s = simulate(Program(1, 0, (u(0), u(0), u(0))), BASE)
    assert [r.start_ns for r in s.records] == [0, 20, 40]


def test_wait_delays_dispatch():
    s = simulate(Program(2, 0, (u(0), Wait(10), u(1))), BASE)
    assert s.records[2].dispatch_ns == 50 and s.records[2].start_ns == 50
    assert s.total_time_ns == 70


def test_trailing_wait_counts():
    assert simulate(Program(1, 0, (u(0), Wait(100))), BASE).total_time_ns == 500


def test_if_stalls_until_measurement_ends():
    p = Program(2, 1, (Measure(0, 0), If(0, 1, u(1))))
    s = simulate(p, BASE, ConstantOutcome(1))
    assert s.records[1].start_ns == 300 and s.total_time_ns == 320
    assert s.conditional_fires == 1


def test_if_false_contributes_no_busy_time():
    p = Program(2, 1, (Measure(0, 0), If(0, 1, CX(0, 1))))
    s = simulate(p, BASE, ConstantOutcome(0))
    rec = s.records[1]
    assert not rec.executed and rec.da == () and rec.start_ns == rec.end_ns
    assert sum(s.da_busy_ns) == 300  # only the measurement
    assert s.conditional_fires == 0


def test_unwritten_guard_warns_and_reads_zero():
    p = Program(1, 1, (If(0, 0, u(0)),))
    with pytest.warns(UnwrittenCbitWarning):
        s = simulate(p, BASE)
    assert s.records[0].executed and s.warnings


def test_reset_holds_five_t1():
    cfg = ControlConfig(t1=(40e-6,))
    s = simulate(Program(1, 0, (Reset(0), u(0))), cfg)
    assert s.records[0].end_ns == 200_000 and s.records[0].da == ()
    assert s.total_time_ns == 200_020


def test_default_t1_used_past_the_list():
    cfg = ControlConfig(t1=(40e-6,), default_t1=10e-6)
    assert simulate(Program(2, 0, (Reset(1),)), cfg).total_time_ns == 50_000


def test_latency_rounded_up_to_cycles():
    cfg = ControlConfig(lat_1q=21)
    assert simulate(Program(1, 0, (u(0),)), cfg).total_time_ns == 25


def test_unlimited_channels():
    cfg = BASE.with_da_channels("inf")
    p = Program(5, 0, (CX(0, 1), CX(2, 3), u(4)))
    s = simulate(p, cfg)
    assert s.total_time_ns == 40 and s.da_count is None and s.da_used == 7


def test_utilization_bv4_windows():
    s = simulate(benchmarks.load("bv4_prefix"), BASE)
    first, second = utilization_report(s, boundaries=[0, 20, 60])
    assert first.da_utilization == 1.0 and first.active == 3
    assert second.da_utilization == pytest.approx(1 / 3, abs=1e-3)


def test_utilization_fixed_windows_truncate():
    s = simulate(benchmarks.load("bv4_prefix"), BASE)
    rows = utilization_report(s, window_ns=25)
    assert [(r.start_ns, r.end_ns) for r in rows] == [(0, 25), (25, 50), (50, 60)]
    assert rows[2].da_utilization == pytest.approx(1 / 3)


def test_utilization_idle_program():
    s = simulate(Program(1, 0, (Wait(10),)), BASE)
    assert [r.da_utilization for r in utilization_report(s, window_ns=10)] == [0.0] * 5
    empty = simulate(Program(1, 0, ()), BASE)
    assert utilization_report(empty, boundaries=[0, 100])[0].da_utilization == 0.0


def test_single_u_on_one_channel():
    cfg = ControlConfig(da_channels=1, chan_2q=1)
    s = simulate(Program(1, 0, (u(0),)), cfg)
    assert utilization_report(s, boundaries=[0, 20])[0].da_utilization == 1.0


def test_utilization_argument_errors():
    s = simulate(benchmarks.load("bv4_prefix"), BASE)
    with pytest.raises(ValueError):
        utilization_report(s)
    with pytest.raises(ValueError):
        utilization_report(s, boundaries=[0, 0])


def test_timeline_csv():
    s = simulate(benchmarks.load("bv4_prefix"), BASE)
    lines = s.timeline_csv().splitlines()
    assert lines[0] == "start_ns,end_ns,active,da_busy,ad_busy"
    assert lines[1] == "0,20,3,3,0"


# ---------------------------------------------------------------------------
# sweeps


def test_rb_sweep_is_flat():
    rows = channel_sweep(benchmarks.load("rb"), BASE, [3, 4, 5, 8, 11, "inf"])
    assert len({r.total_ns for r in rows}) == 1
    assert len({r.total_no_measure_ns for r in rows}) == 1


@pytest.mark.parametrize("name", list(benchmarks.SHAPES) + ["bell", "allxy"])
def test_sweep_nonincreasing(name):
    rows = channel_sweep(benchmarks.load(name), BASE, list(range(3, 12)) + ["inf"])
    t = [r.total_ns for r in rows]
    t0 = [r.total_no_measure_ns for r in rows]
    assert t == sorted(t, reverse=True) and t0 == sorted(t0, reverse=True)
    assert all(a <= b for a, b in zip(t0, t))


def test_sweep_count_below_cx_width():
    with pytest.raises(ControlConfigError):
        channel_sweep(benchmarks.load("bell"), BASE, [2])


def test_qubit_count_channels_do_not_always_saturate():
    """Two CX and a U on five qubits need seven channels at once, more than
    five qubits times one channel per single-qubit gate."""
    p = Program(5, 0, (CX(0, 1), CX(2, 3), u(4)))
    rows = channel_sweep(p, BASE, [5, 7, "inf"])
    assert [r.total_ns for r in rows] == [80, 40, 40]
    assert saturation_count(rows) == 7


def test_enough_channels_for_every_op_saturates():
    for name in ("qft5", "qv_n5d5", "grover"):
        p = benchmarks.load(name)
        demand = sum(3 if isinstance(i, CX) else 1 for i in p.instructions)
        rows = channel_sweep(p, BASE, [demand, "inf"])
        assert rows[0].total_ns == rows[1].total_ns


# ---------------------------------------------------------------------------
# configs


@pytest.mark.parametrize("kw", [
    dict(chan_2q=4),
    dict(da_channels=0),
    dict(ad_channels=1, meas_ad=2),
    dict(clock_hz=0),
    dict(lat_1q=-1),
    dict(lat_2q=math.inf),
    dict(default_t1=0),
    dict(chan_1q=1.5),
])
def test_invalid_configs(kw):
    with pytest.raises(ControlConfigError):
        ControlConfig(**kw)


def test_ibm_preset():
    c = PRESETS["ibm-experimental"]
    assert (c.lat_1q, c.lat_2q, c.da_channels, c.ad_channels) == (50, 300, 2, 2)
    s1 = simulate(benchmarks.load("active_reset"), c, ConstantOutcome(1))
    s2 = simulate(benchmarks.load("active_reset"), c, ConstantOutcome(1))
    assert s1 == s2


def test_load_config_forms(tmp_path):
    assert load_control_config("qcb-baseline") is BASE
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"preset": "ibm-experimental", "lat_meas": 1000, "startup_offset_ns": 130}))
    c = load_control_config(f)
    assert c.lat_1q == 50 and c.lat_meas == 1000 and c.startup_offset_ns == 130
    g = tmp_path / "d.json"
    g.write_text(json.dumps({"da_channels": "inf", "t1_us": [50, 60]}))
    d = load_control_config(str(g))
    assert math.isinf(d.da_channels) and d.t1 == pytest.approx((50e-6, 60e-6))
    assert load_control_config(d.to_dict()) == d


@pytest.mark.parametrize("text", ['{"bogus": 1}', "{broken", '{"t1": [1], "t1_us": [1]}'])
def test_bad_config_files(tmp_path, text):
    f = tmp_path / "c.json"
    f.write_text(text)
    with pytest.raises(ControlConfigError):
        load_control_config(f)


def test_unknown_preset():
    with pytest.raises(ControlConfigError, match="presets"):
        load_control_config("no-such-thing")


def test_seeded_random_outcomes_are_stable():
    p = parse_program("qreg q[1]; creg c[1];" + "measure q[0] -> c[0]; if (c[0]==1) U(pi,0,pi) q[0];" * 20)
    src = SeededRandomOutcome(0.5, seed=4)
    a = simulate(p, BASE, src, trial=3)
    b = simulate(p, BASE, SeededRandomOutcome(0.5, seed=4), trial=3)
    assert a == b
    assert 0 < a.conditional_fires < 20


def test_stats_dict_is_json_ready():
    s = simulate(benchmarks.load("bv4"), BASE.with_da_channels("inf"))
    doc = json.loads(json.dumps(s.to_dict()))
    assert doc["da_channels"] == "inf" and len(doc["instructions"]) == 14
