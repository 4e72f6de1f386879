"""
Command-line entry point.

    thermoguard simulate     simulate one run, write trace/baselines/stats
    thermoguard profile      offline profiling search, write an app profile
    thermoguard run          simulate and score one run (tau, omega, theta, TSMP)
    thermoguard metrics      score an existing trace against baselines
    thermoguard reliability  compare thermal-cycling MTTF of two traces
    thermoguard attack       gen | train | eval | compare side-channel experiments
    thermoguard report       time-series/histogram CSV and optional SVG plots

Exit codes: 0 ok, 2 usage, 3 bad data or simulation failure, 4 infeasible.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .attack import (DEFAULT_CODES, NearestNeighbor, compare_governors, default_classes, evaluate, gen_dataset,
                     learn_profiles, load_dataset, save_dataset, train)
from .chip import (ConfigError, ConfigDocument, TraceFormatError, WorkloadSpec, parse_workload,
                   read_baselines, read_trace, resolve_document, write_baselines, write_trace)
from .date import AppProfile, DateGovernor, InfeasibleDeadline, ProfilingGrid, learn
from .governors import by_name
from .io import atomic_write
from .metrics import EMPIRICAL, OMEGA_MODES, DegenerateRunError, reduction, security_report
from .reliability import CYCLE_PEAK, TAU_CONSTANT, cycle_stats, cycle_temperatures, mttf_ratio
from .sim import PowerParams, SimulationError, baseline_run, run
from .workloads import BUILTIN, builtin

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 2, 3, 4

log = logging.getLogger("thermoguard")


class UsageError(Exception):
    pass


# --- helpers ---------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _manifest(args, outputs: Sequence[str]) -> dict:
    """
    Everything needed to regenerate the outputs. Output locations and
    timestamps are left out so reruns into another directory match bytewise.
    """
    skip = {"func", "out", "json"}
    keep = {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}
    return {"tool": "thermoguard", "version": __version__, "command": args.command,
            "arguments": keep, "outputs": list(outputs)}


def _write_manifest(path: Path, args, outputs: Sequence[str]) -> None:
    atomic_write(path, _dump(_manifest(args, outputs)))


def _document(ref: str) -> ConfigDocument:
    return resolve_document(ref)


def _params(doc: ConfigDocument) -> PowerParams:
    return PowerParams.from_mapping(doc.power)


def _workload(doc: ConfigDocument, ref: Optional[str]) -> WorkloadSpec:
    if ref is None:
        if doc.workload is None:
            raise UsageError("--workload is required (the configuration has no workload section)")
        return doc.workload
    if ref in BUILTIN:
        return builtin(ref, doc.chip.n_cores)
    path = Path(ref)
    if not path.is_file():
        raise UsageError(f"unknown workload {ref!r}; built-ins: {', '.join(sorted(BUILTIN))}, or a YAML file")
    import yaml

    try:
        d = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"{ref}: parse error: {e}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{ref}: expected a mapping")
    w = parse_workload(d.get("workload", d))
    w.check_cores(doc.chip.n_cores)
    return w


def _governor(spec: str, profile_path: Optional[str], doc: ConfigDocument, seed: int):
    if spec == "date":
        if not profile_path:
            raise UsageError("--governor date needs --profile")
        profile = AppProfile.from_json(Path(profile_path).read_text())
        profile.validate(doc.chip.dvfs[doc.chip.sensor_cluster])
        _, b_now = baseline_run(doc.chip, 10_000, _params(doc), seed)
        return DateGovernor(profile, b_now)
    try:
        return by_name(spec)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _print_kv(pairs: dict) -> None:
    for k, v in pairs.items():
        if isinstance(v, float):
            v = f"{v:.10g}"
        print(f"{k}={v}")


# --- commands --------------------------------------------------------------

def _simulate(args, score: bool) -> int:
    doc = _document(args.config)
    params = _params(doc)
    workload = _workload(doc, args.workload)
    if args.deadline is not None:
        workload = WorkloadSpec(workload.name, workload.phases, float(args.deadline))
    gov = _governor(args.governor, args.profile, doc, args.seed)
    trace, stats = run(doc.chip, workload, gov, params, args.seed, noise_sigma=args.noise)
    _, baselines = baseline_run(doc.chip, 10_000, params, args.seed, noise_sigma=args.noise)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    record = {"workload": workload.name, "governor": args.governor, "seed": args.seed,
              "execution_time_ms": stats.execution_time, "deadline_ms": workload.deadline,
              "deadline_met": stats.deadline_met, "energy_j": round(stats.energy, 9),
              "peak_temp_c": round(stats.peak_temp, 6)}
    names = ["trace.csv", "baselines.csv", "stats.json"]
    if score:
        rep = security_report(trace, baselines, args.omega_mode)
        record.update(rep.as_dict())
    atomic_write(out / "trace.csv", write_trace(trace))
    atomic_write(out / "baselines.csv", write_baselines(baselines))
    atomic_write(out / "stats.json", _dump(record))
    _write_manifest(out / "manifest.json", args, names)
    _print_kv({k: record[k] for k in ("execution_time_ms", "deadline_met", "energy_j")})
    if score:
        _print_kv({k: record[k] for k in ("tau", "omega", "theta", "tsmp")})
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _simulate(args, score=False)


def cmd_run(args) -> int:
    return _simulate(args, score=True)


def cmd_profile(args) -> int:
    doc = _document(args.config)
    workload = _workload(doc, args.workload)
    grid = ProfilingGrid(tuple(args.caps)) if args.caps else ProfilingGrid()
    res = learn(doc.chip, workload, args.deadline, grid, args.seed, _params(doc))
    b = res.best
    out = Path(args.out)
    atomic_write(out, res.profile.to_json())
    _write_manifest(out.with_name(out.name + ".manifest.json"), args, [out.name])
    _print_kv({"f_app_mhz": res.profile.f_app, "t_threshold_c": round(res.profile.t_threshold, 3),
               "cap_c": b.cap, "tau": b.tau, "omega": b.omega, "theta": b.theta,
               "tsmp": 1.0 / b.objective, "runs": len(res.points)})
    return EXIT_OK


def cmd_metrics(args) -> int:
    trace = read_trace(Path(args.trace).read_text())
    baselines = read_baselines(Path(args.baseline).read_text())
    rep = security_report(trace, baselines, args.omega_mode, args.hysteresis)
    record = rep.as_dict()
    if args.compare:
        other = read_trace(Path(args.compare).read_text())
        other_rep = security_report(other, baselines, args.omega_mode, args.hysteresis)
        record["compare_theta"] = other_rep.theta
        record["compare_tsmp"] = other_rep.tsmp
        record["theta_reduction_pct"] = round(reduction(other_rep.theta, rep.theta), 6)
    _print_kv(record)
    if args.json:
        out = Path(args.json)
        atomic_write(out, _dump(record))
        _write_manifest(out.with_name(out.name + ".manifest.json"), args, [out.name])
    return EXIT_OK


def cmd_reliability(args) -> int:
    ta = read_trace(Path(args.trace_a).read_text())
    tb = read_trace(Path(args.trace_b).read_text())
    ba = read_baselines(Path(args.baseline).read_text()) if args.baseline else None
    bb = read_baselines(Path(args.baseline_b).read_text()) if args.baseline_b else ba
    if args.cycle_temps == TAU_CONSTANT and ba is None:
        raise UsageError("--cycle-temps tau needs --baseline")
    record = {}
    for side, t, b in (("a", ta, ba), ("b", tb, bb)):
        ev = cycle_stats(t, args.hysteresis)
        temps = cycle_temperatures(t, b, args.cycle_temps, args.hysteresis) if ev else []
        record[f"cycles_{side}"] = len(ev)
        record[f"temp_sum_{side}"] = float(sum(temps))
        record[f"mean_delta_t_{side}"] = float(np.mean([e.delta_t for e in ev])) if ev else 0.0
        record[f"max_delta_t_{side}"] = float(max((e.delta_t for e in ev), default=0.0))
    if record["cycles_a"] and record["cycles_b"]:
        record["mttf_ratio"] = mttf_ratio(record["temp_sum_a"], record["cycles_a"],
                                          record["temp_sum_b"], record["cycles_b"])
    else:
        raise DegenerateRunError("degenerate run: a trace has no thermal cycles")
    _print_kv(record)
    if args.json:
        out = Path(args.json)
        atomic_write(out, _dump(record))
        _write_manifest(out.with_name(out.name + ".manifest.json"), args, [out.name])
    return EXIT_OK


def _classes(doc: ConfigDocument, spec: Optional[str]):
    chip = doc.chip
    sensors = chip.sensor_indices
    core = sensors[min(2, len(sensors) - 1)]
    classes = default_classes(chip.n_cores, core)
    if spec:
        wanted = [s.strip() for s in spec.split(",") if s.strip()]
        unknown = set(wanted) - set(DEFAULT_CODES)
        if unknown:
            raise UsageError(f"unknown classes {sorted(unknown)}; available: {', '.join(DEFAULT_CODES)}")
        classes = [c for c in classes if c.label in wanted]
    return classes


def _attack_governor(args, doc, classes):
    if args.governor == "date":
        profiles = learn_profiles(doc.chip, classes, args.seed, _params(doc))
        return {label: DateGovernor(p) for label, p in profiles.items()}
    return _governor(args.governor, None, doc, args.seed)


def cmd_attack(args) -> int:
    if args.action == "gen":
        doc = _document(args.config)
        classes = _classes(doc, args.classes)
        ds = gen_dataset(doc.chip, _attack_governor(args, doc, classes), classes, args.runs, args.seed,
                         _params(doc))
        save_dataset(ds, args.out, {"run": _manifest(args, ["manifest.json", "traces/"])})
        counts = {s: len(ds.indices(s)) for s in ("train", "validation", "holdout")}
        _print_kv({"traces": len(ds.traces), **counts})
        return EXIT_OK
    if args.action == "train":
        ds = load_dataset(args.data)
        model = train(ds)
        out = Path(args.out)
        atomic_write(out, model.to_json())
        _write_manifest(out.with_name(out.name + ".manifest.json"), args, [out.name])
        _print_kv({"train_vectors": len(model.labels)})
        return EXIT_OK
    if args.action == "eval":
        ds = load_dataset(args.data)
        model = NearestNeighbor.from_json(Path(args.model).read_text())
        rep = evaluate(model, ds)
        _print_kv({"holdout": rep.total, "accuracy": rep.accuracy})
        for c, a in rep.per_class.items():
            print(f"accuracy[{c}]={a:.6f}")
        if args.json:
            out = Path(args.json)
            atomic_write(out, _dump(rep.as_dict()))
            _write_manifest(out.with_name(out.name + ".manifest.json"), args, [out.name])
        return EXIT_OK
    # compare
    doc = _document(args.config)
    classes = _classes(doc, args.classes)
    cmp_ = compare_governors(doc.chip, classes, args.runs, args.seed, _params(doc))
    record = {"accuracy_baseline": cmp_.baseline.accuracy, "accuracy_date": cmp_.defended.accuracy,
              "delta": cmp_.delta}
    _print_kv(record)
    if args.json:
        out = Path(args.json)
        atomic_write(out, _dump({**record, "baseline": cmp_.baseline.as_dict(),
                                 "date": cmp_.defended.as_dict()}))
        _write_manifest(out.with_name(out.name + ".manifest.json"), args, [out.name])
    return EXIT_OK


# --- report ----------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def histogram(trace) -> tuple[np.ndarray, np.ndarray]:
    """Whole-degree temperature histogram over every sample of every core."""
    deg = trace.whole_degrees().ravel()
    lo, hi = int(deg.min()), int(deg.max())
    edges = np.arange(lo, hi + 2)
    counts, _ = np.histogram(deg, bins=edges - 0.5)
    return edges[:-1], counts


def _svg_frame(w: int, h: int, title: str) -> list[str]:
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
            f'<rect width="{w}" height="{h}" fill="white"/>',
            f'<text x="{w // 2}" y="18" text-anchor="middle" font-family="sans-serif" font-size="13">'
            f'{escape(title)}</text>']


def svg_timeseries(trace, title: str = "temperature") -> str:
    w, h, m = 720, 360, 45
    x = trace.celsius
    lo, hi = float(x.min()), float(x.max())
    hi = hi if hi > lo else lo + 1.0
    n = x.shape[1]
    sx = (w - 2 * m) / max(n - 1, 1)
    sy = (h - 2 * m) / (hi - lo)
    out = _svg_frame(w, h, title)
    out.append(f'<line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}" stroke="black"/>')
    out.append(f'<line x1="{m}" y1="{m}" x2="{m}" y2="{h - m}" stroke="black"/>')
    for c in range(x.shape[0]):
        pts = " ".join(f"{m + i * sx:.1f},{h - m - (v - lo) * sy:.1f}" for i, v in enumerate(x[c]))
        out.append(f'<polyline fill="none" stroke="{_COLORS[c % len(_COLORS)]}" stroke-width="1" points="{pts}"/>')
        out.append(f'<text x="{w - m + 4}" y="{m + 14 * c}" font-family="sans-serif" font-size="11" '
                   f'fill="{_COLORS[c % len(_COLORS)]}">core {trace.core_ids[c]}</text>')
    out.append(f'<text x="4" y="{m}" font-family="sans-serif" font-size="11">{hi:.0f} C</text>')
    out.append(f'<text x="4" y="{h - m}" font-family="sans-serif" font-size="11">{lo:.0f} C</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def svg_histogram(temps: np.ndarray, counts: np.ndarray, title: str = "temperature histogram") -> str:
    w, h, m = 720, 360, 45
    top = max(int(counts.max()), 1)
    bw = (w - 2 * m) / len(counts)
    out = _svg_frame(w, h, title)
    for i, (t, c) in enumerate(zip(temps, counts)):
        bh = (h - 2 * m) * c / top
        out.append(f'<rect x="{m + i * bw:.1f}" y="{h - m - bh:.1f}" width="{max(bw - 1, 1):.1f}" '
                   f'height="{bh:.1f}" fill="#1f77b4"><title>{int(t)} C: {int(c)}</title></rect>')
    out.append(f'<text x="{m}" y="{h - m + 16}" font-family="sans-serif" font-size="11">{int(temps[0])} C</text>')
    out.append(f'<text x="{w - m}" y="{h - m + 16}" text-anchor="end" font-family="sans-serif" '
               f'font-size="11">{int(temps[-1])} C</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_report(args) -> int:
    trace = read_trace(Path(args.trace).read_text())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["time_ms," + ",".join(f"core{c}_c" for c in trace.core_ids)]
    for k in range(len(trace)):
        t = trace.t0_ms + k * trace.period_ms
        rows.append(f"{t}," + ",".join(f"{trace.series[c, k] / 1000:.3f}" for c in range(trace.n_cores)))
    temps, counts = histogram(trace)
    hist = ["temp_c,count"] + [f"{int(t)},{int(c)}" for t, c in zip(temps, counts)]
    names = ["timeseries.csv", "histogram.csv"]
    atomic_write(out / "timeseries.csv", "\n".join(rows) + "\n")
    atomic_write(out / "histogram.csv", "\n".join(hist) + "\n")
    if args.svg:
        atomic_write(out / "timeseries.svg", svg_timeseries(trace, Path(args.trace).name))
        atomic_write(out / "histogram.svg", svg_histogram(temps, counts))
        names += ["timeseries.svg", "histogram.svg"]
    _write_manifest(out / "manifest.json", args, names)
    _print_kv({"samples": len(trace), "cores": trace.n_cores, "histogram_bins": len(counts)})
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def _caps(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad cap list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermoguard", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("--version", action="version", version=f"thermoguard {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings from governors")
    sub = p.add_subparsers(dest="command", required=True)

    def sim_flags(sp, governor_default="performance"):
        sp.add_argument("--config", required=True, help="preset name or YAML file")
        sp.add_argument("--workload", help="built-in workload name or YAML file (default: config's workload)")
        sp.add_argument("--governor", default=governor_default,
                        help="performance | ondemand | date | fixed:<MHz>")
        sp.add_argument("--profile", help="app profile (required for --governor date)")
        sp.add_argument("--deadline", type=float, help="override the workload deadline, ms")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--noise", type=float, default=0.2, help="sensor noise sigma, degC")
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("simulate", help="simulate one run")
    sim_flags(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("run", help="simulate one run and score it")
    sim_flags(sp)
    sp.add_argument("--omega-mode", choices=OMEGA_MODES, default=EMPIRICAL)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("profile", help="learn an app profile")
    sp.add_argument("--config", required=True)
    sp.add_argument("--workload")
    sp.add_argument("--deadline", type=float, required=True, help="execution-time deadline, ms")
    sp.add_argument("--caps", type=_caps, help="comma-separated thermal caps, degC (default 70,75,80,85,90)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="profile file to write")
    sp.set_defaults(func=cmd_profile)

    sp = sub.add_parser("metrics", help="score a trace")
    sp.add_argument("--trace", required=True)
    sp.add_argument("--baseline", required=True, help="baseline CSV (core,baseline_mc)")
    sp.add_argument("--compare", help="second trace; prints theta reduction of --trace relative to it")
    sp.add_argument("--omega-mode", choices=OMEGA_MODES, default=EMPIRICAL)
    sp.add_argument("--hysteresis", type=float, default=1.0)
    sp.add_argument("--json", help="also write the record to this file")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("reliability", help="MTTF ratio of two traces (a over b)")
    sp.add_argument("trace_a")
    sp.add_argument("trace_b")
    sp.add_argument("--baseline", help="baselines for trace a (and b unless --baseline-b)")
    sp.add_argument("--baseline-b")
    sp.add_argument("--cycle-temps", choices=(TAU_CONSTANT, CYCLE_PEAK), default=TAU_CONSTANT)
    sp.add_argument("--hysteresis", type=float, default=1.0)
    sp.add_argument("--json")
    sp.set_defaults(func=cmd_reliability)

    sp = sub.add_parser("attack", help="side-channel attack experiments")
    sp.add_argument("action", choices=("gen", "train", "eval", "compare"))
    sp.add_argument("--config", help="preset or YAML file (gen, compare)")
    sp.add_argument("--classes", help="comma-separated class labels (default: all four)")
    sp.add_argument("--runs", type=int, default=100, help="runs per class")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--governor", default="performance", help="gen only: performance | ondemand | date | fixed:<MHz>")
    sp.add_argument("--data", help="dataset directory (train, eval)")
    sp.add_argument("--model", help="model file (eval)")
    sp.add_argument("--out", help="dataset directory (gen) or model file (train)")
    sp.add_argument("--json", help="eval/compare: write the report here")
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("report", help="plot data for a trace")
    sp.add_argument("--trace", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--svg", action="store_true", help="also write SVG plots")
    sp.set_defaults(func=cmd_report)
    return p


_REQUIRED = {"gen": ("config", "out"), "train": ("data", "out"), "eval": ("data", "model"), "compare": ("config",)}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "attack":
        missing = [f"--{k}" for k in _REQUIRED[args.action] if getattr(args, k) is None]
        if missing:
            parser.error(f"attack {args.action} requires {', '.join(missing)}")
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"thermoguard: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleDeadline as e:
        print(f"thermoguard: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, TraceFormatError, SimulationError, DegenerateRunError, ValueError, OSError,
            ZeroDivisionError) as e:
        print(f"thermoguard: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
