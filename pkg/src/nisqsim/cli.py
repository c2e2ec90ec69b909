"""Command-line front end: ``nisqsim <command> [options]``.

Commands
  noise    Monte-Carlo noisy simulation of one program
  savings  optimized vs brute-force engine at one or more trial counts
  timing   control-system timing of one program
  sweep    total time across DA channel counts
  cosim    coupled control + noisy simulation (programs with feedback)
  compare  two or more programs side by side, normalized to the first
  encode   write the binary instruction encoding of a program

Every report embeds the arguments that produced it. Reports are written
atomically: on error nothing is written and the exit status is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import statistics
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import benchmarks
from .control import (PRESETS, ControlConfig, channel_sweep, load_control_config,
                      saturation_count, simulate, utilization_report)
from .cosim import cosimulate
from .montecarlo import (fidelity, generate_traces, ideal_distribution, run_bruteforce,
                         run_optimized, savings, total_variation)
from .noise import DeviceErrorModel, load_device_model, yorktown
from .qasm import Measure, Program, U, CX, build_layers, load_program, validate_against_device, write_binary

DEFAULT_SWEEP = "3,4,5,6,7,8,9,10,11,inf"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Inputs


def _program(ref: str) -> Program:
    if ref.startswith("bench:"):
        name = ref[len("bench:"):]
        if not benchmarks.path(name).exists():
            raise UsageError(f"no bundled benchmark named {name!r}")
        return benchmarks.load(name)
    if not Path(ref).is_file():
        raise UsageError(f"program file not found: {ref}")
    return load_program(ref)


def _device(ref: str | None, p: Program | None = None) -> DeviceErrorModel:
    if ref is None or ref == "yorktown":
        return yorktown()
    if ref.startswith("uniform:"):
        rate = float(ref.split(":", 1)[1])
        return DeviceErrorModel.uniform(p.qubit_count if p else 5, rate)
    if ref == "noiseless":
        return DeviceErrorModel.noiseless(p.qubit_count if p else 5)
    if not Path(ref).is_file():
        raise UsageError(f"device config not found: {ref}")
    return load_device_model(ref)


def _control(ref: str | None) -> ControlConfig:
    if ref is None:
        return PRESETS["qcb-baseline"]
    if ref not in PRESETS and not Path(ref).is_file():
        raise UsageError(f"control config not found: {ref} (presets: {', '.join(PRESETS)})")
    return load_control_config(ref)


def _counts(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok in ("inf", "infinite"):
            out.append(math.inf)
            continue
        try:
            out.append(int(tok))
        except ValueError:
            raise UsageError(f"bad channel count {tok!r}") from None
    return out


def _trial_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in str(text).split(",")]
    except ValueError:
        raise UsageError(f"bad trial count {text!r}") from None
    if any(v < 1 for v in vals):
        raise UsageError("trials must be >= 1")
    return vals


def _checked(p: Program, m: DeviceErrorModel) -> None:
    bad = validate_against_device(p, m)
    if bad:
        detail = "; ".join(f"[{v.index}] {v.kind}: {v.detail}" for v in bad[:5])
        raise ValueError(f"{p.source_name or 'program'} does not fit device {m.name or ''}: {detail}")


def _jsonable(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


# ---------------------------------------------------------------------------
# Commands. Each returns (report dict, csv rows or None, text lines).


def _reference(dist: np.ndarray, width: int):
    top = int(np.argmax(dist))
    if dist[top] > 1 - 1e-9:
        return format(top, f"0{width}b") if width else ""
    return dist


def cmd_noise(a):
    p = _program(a.program[0])
    m = _device(a.device, p)
    _checked(p, m)
    c = build_layers(p)
    trials = _trial_list(a.trials)[0]
    ts = generate_traces(c, m, trials, a.seed)
    run = run_bruteforce if a.engine == "brute" else run_optimized
    dist, metrics = run(ts)
    ideal = ideal_distribution(c)
    ref = _reference(ideal, p.cbit_count)
    report = {
        "program": p.source_name, "device": m.name, "engine": a.engine,
        "trials": trials, "seed": a.seed,
        "counts": dist.counts,
        "ideal_output": ref if isinstance(ref, str) else None,
        "fidelity": fidelity(dist, ref),
        "error_free_fraction": ts.error_free_fraction(),
        "tvd_to_ideal": total_variation(dist, ideal),
        "matvec_count": metrics.matvec_count, "msv_peak": metrics.msv_peak,
    }
    rows = [["bitstring", "count", "probability"]]
    rows += [[k, v, v / trials] for k, v in dist.counts.items()]
    text = [f"{p.source_name}: {trials} trials, {a.engine} engine, seed {a.seed}",
            f"  fidelity {report['fidelity']:.4f}   error-free trials {report['error_free_fraction']:.4f}"
            f"   TVD to ideal {report['tvd_to_ideal']:.4f}",
            f"  matvecs {metrics.matvec_count}   peak stored vectors {metrics.msv_peak}"]
    text += [f"  {k}  {v:6d}  {v / trials:.4f}" for k, v in dist.counts.items()]
    return report, rows, text


def cmd_savings(a):
    p = _program(a.program[0])
    m = _device(a.device, p)
    _checked(p, m)
    c = build_layers(p)
    out = []
    for trials in _trial_list(a.trials):
        ts = generate_traces(c, m, trials, a.seed)
        d_opt, opt = run_optimized(ts)
        d_bru, bru = run_bruteforce(ts)
        if d_opt.per_trial != d_bru.per_trial:
            raise RuntimeError(f"engines disagree at {trials} trials")
        out.append({"trials": trials, "brute_matvecs": bru.matvec_count,
                    "optimized_matvecs": opt.matvec_count,
                    "normalized": opt.matvec_count / bru.matvec_count if bru.matvec_count else 1.0,
                    "savings": savings(bru, opt), "msv_peak": opt.msv_peak,
                    "outcomes_identical": True})
    report = {"program": p.source_name, "device": m.name, "seed": a.seed, "rows": out}
    keys = list(out[0])
    rows = [keys] + [[r[k] for k in keys] for r in out]
    text = [f"{p.source_name}: optimized vs brute force (seed {a.seed})",
            "  trials   brute      optimized  savings  msv"]
    text += [f"  {r['trials']:6d}  {r['brute_matvecs']:9d}  {r['optimized_matvecs']:9d}  "
             f"{r['savings'] * 100:6.2f}%  {r['msv_peak']:3d}" for r in out]
    return report, rows, text


def _timing_cfg(a) -> ControlConfig:
    cfg = _control(a.control)
    if getattr(a, "da_channels", None):
        counts = _counts(a.da_channels)
        if len(counts) != 1:
            raise UsageError("timing takes a single --da-channels value")
        cfg = cfg.with_da_channels(counts[0])
    return cfg


def cmd_timing(a):
    p = _program(a.program[0])
    if a.no_measure:
        p = p.without_measurements()
    cfg = _timing_cfg(a)
    stats = simulate(p, cfg)
    report = {"program": p.source_name, "control": cfg.to_dict(), **stats.to_dict()}
    if a.window:
        report["utilization"] = [vars(r) for r in utilization_report(stats, window_ns=a.window)]
    rows = [["start_ns", "end_ns", "active", "da_busy", "ad_busy"]]
    rows += [[s.start_ns, s.end_ns, s.active, s.da_busy, s.ad_busy] for s in stats.timeline()]
    text = [f"{p.source_name}: total {stats.total_time_ns:g} ns on {cfg.name} "
            f"({cfg.da_channels} DA / {cfg.ad_channels} AD)"]
    text += [f"  DA{i} utilization {u * 100:5.1f}%" for i, u in enumerate(stats.da_utilization)]
    text += [f"  warning: {w}" for w in stats.warnings]
    if a.window:
        text += [f"  [{r['start_ns']:g}, {r['end_ns']:g}) DA {r['da_utilization'] * 100:5.1f}%"
                 f"  active {r['active']}" for r in report["utilization"]]
    return report, rows, text


def cmd_sweep(a):
    cfg = _control(a.control)
    counts = _counts(a.da_channels or DEFAULT_SWEEP)
    programs = []
    rows = [["program", "da_channels", "total_ns", "total_no_measure_ns"]]
    text = []
    saved = []
    for ref in a.program:
        p = _program(ref)
        res = channel_sweep(p, cfg, counts)
        first, last = res[0], res[-1]
        save = 1 - last.total_ns / first.total_ns if first.total_ns else 0.0
        save0 = 1 - last.total_no_measure_ns / first.total_no_measure_ns if first.total_no_measure_ns else 0.0
        saved.append(save)
        programs.append({"program": p.source_name,
                         "rows": [vars(r) for r in res],
                         "saving_last_vs_first": save,
                         "saving_last_vs_first_no_measure": save0,
                         "saturated_at": saturation_count(res)})
        for r in res:
            rows.append([p.source_name, r.da_channels, r.total_ns, r.total_no_measure_ns])
        text.append(f"{p.source_name}: " + "  ".join(
            f"{'inf' if math.isinf(r.da_channels) else r.da_channels}:{r.total_ns:g}" for r in res)
            + f"   saving {save * 100:.1f}% (no measure {save0 * 100:.1f}%)")
    report = {"control": cfg.to_dict(), "da_counts": counts, "programs": programs,
              "mean_saving": statistics.fmean(saved)}
    text.append(f"mean saving {report['mean_saving'] * 100:.1f}%")
    return report, rows, text


def cmd_cosim(a):
    p = _program(a.program[0])
    cfg = _timing_cfg(a)
    m = _device(a.device or "noiseless", p)
    _checked(p, m)
    trials = _trial_list(a.trials)[0]
    res = cosimulate(p, cfg, m, trials, a.seed, initial_state=a.initial_state)
    report = {"program": p.source_name, "device": m.name, "control": cfg.to_dict(),
              "seed": a.seed, "initial_state": a.initial_state, **res.summary()}
    rows = [["trial", "register", "total_time_ns", "conditional_fires"]]
    rows += [[i, res.distribution.bitstring(s.register), s.total_time_ns, s.conditional_fires]
             for i, s in enumerate(res.stats)]
    text = [f"{p.source_name}: {trials} co-simulated trials on {cfg.name}",
            f"  mean time {report['mean_total_time_ns']:g} ns "
            f"(min {report['min_total_time_ns']:g}, max {report['max_total_time_ns']:g})",
            f"  mean conditional fires {report['mean_conditional_fires']:.3f}"]
    text += [f"  {k}  {v}" for k, v in res.distribution.counts.items()]
    return report, rows, text


def cmd_compare(a):
    if len(a.program) < 2:
        raise UsageError("compare needs at least two --program values")
    cfg = _control(a.control)
    m = _device(a.device, None) if a.device else None
    entries = []
    for ref in a.program:
        p = _program(ref)
        e = {"program": p.source_name, "u": p.count(U), "cx": p.count(CX), "measure": p.count(Measure),
             "time_ns": simulate(p, cfg).total_time_ns,
             "time_no_measure_ns": simulate(p.without_measurements(), cfg).total_time_ns}
        if m is not None:
            _checked(p, m)
            c = build_layers(p)
            ts = generate_traces(c, m, _trial_list(a.trials)[0], a.seed)
            dist, _ = run_optimized(ts)
            e["fidelity"] = fidelity(dist, _reference(ideal_distribution(c), p.cbit_count))
        entries.append(e)
    base = entries[0]
    for e in entries:
        for key in ("time_ns", "time_no_measure_ns", "fidelity"):
            if key in e:
                e[key + "_ratio"] = e[key] / base[key] if base[key] else math.nan
    keys = list(entries[0])
    report = {"control": cfg.to_dict(), "device": m.name if m else None, "programs": entries}
    rows = [keys] + [[e.get(k) for k in keys] for e in entries]
    text = [f"normalized to {base['program']} on {cfg.name}"]
    for e in entries:
        line = (f"  {e['program']:>16}  time {e['time_ns']:8g} ns ({e['time_ns_ratio']:.3f})"
                f"  no-measure {e['time_no_measure_ns']:8g} ns ({e['time_no_measure_ns_ratio']:.3f})")
        if "fidelity" in e:
            line += f"  fidelity {e['fidelity']:.4f} ({e['fidelity_ratio']:.3f})"
        text.append(line)
    return report, rows, text


COMMANDS = {"noise": cmd_noise, "savings": cmd_savings, "timing": cmd_timing,
            "sweep": cmd_sweep, "cosim": cmd_cosim, "compare": cmd_compare}


# ---------------------------------------------------------------------------
# Output


def _render(report, rows, text, fmt: str) -> str:
    if fmt == "structured":
        return json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for r in rows:
            w.writerow(["inf" if isinstance(v, float) and math.isinf(v) else v for v in r])
        return buf.getvalue()
    return "\n".join(text) + "\n"


def write_atomic(path: str | Path, data: str | bytes) -> None:
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8"})) as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nisqsim", description="Noisy quantum program and control-system simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_, *, device=False, control=False, trials=None, engine=False,
            channels=False, measure=False, multi=False):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--program", action="append", required=True,
                        help="OpenQASM file, or bench:NAME for a bundled benchmark"
                             + (" (repeatable)" if multi else ""))
        if device:
            sp.add_argument("--device", help="device JSON, 'yorktown', 'noiseless' or 'uniform:RATE'")
        if control:
            sp.add_argument("--control", help=f"control JSON or preset ({', '.join(PRESETS)})")
        if trials is not None:
            sp.add_argument("--trials", default=trials, help="trial count" + (" list" if "," in trials else ""))
            sp.add_argument("--seed", type=int, default=0)
        if engine:
            sp.add_argument("--engine", choices=("optimized", "brute"), default="optimized")
        if channels:
            sp.add_argument("--da-channels", help="DA channel count(s), e.g. 3,5,inf")
        if measure:
            sp.add_argument("--no-measure", action="store_true", help="strip measurements first")
        sp.add_argument("--format", choices=("text", "structured", "csv"), default="text")
        sp.add_argument("--out", help="write the report here instead of stdout")
        return sp

    add("noise", "Monte-Carlo noisy simulation", device=True, trials="1024", engine=True)
    add("savings", "optimized vs brute-force computation", device=True, trials="1024,2048,4096,8192")
    sp = add("timing", "control-system timing", control=True, channels=True, measure=True)
    sp.add_argument("--window", type=float, help="utilization window width in ns")
    add("sweep", "DA channel sweep", control=True, channels=True, multi=True)
    sp = add("cosim", "coupled control and noisy simulation", device=True, control=True,
             trials="256", channels=True)
    sp.add_argument("--initial-state", type=int, default=0, help="starting basis index")
    add("compare", "side-by-side program comparison", device=True, control=True, trials="1024", multi=True)
    sp = sub.add_parser("encode", help="write the binary instruction encoding")
    sp.add_argument("--program", action="append", required=True)
    sp.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    try:
        if a.command == "encode":
            p = _program(a.program[0])
            tmp = Path(a.out).with_name(f".{Path(a.out).name}.partial")
            write_binary(p, tmp)
            os.replace(tmp, a.out)
            return 0
        report, rows, text = COMMANDS[a.command](a)
        full = {"command": a.command, "args": dict(sorted(vars(a).items())), "result": report}
        out = _render(full, rows, text, a.format)
    except UsageError as exc:
        ap.error(str(exc))
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"nisqsim: error: {exc}", file=sys.stderr)
        return 1
    if a.out:
        write_atomic(a.out, out)
    else:
        sys.stdout.write(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
