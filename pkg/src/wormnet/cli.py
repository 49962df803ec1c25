"""Command-line front end: ``wormnet ode|sim|trace stats|trace sim|sweep``.

Exit codes: 0 on success, 1 for bad input, 2 for anything unexpected.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

from .config import load_scenario
from .metrics import CSV_FIELDS, compute_y, metrics_record, write_metrics_csv

log = logging.getLogger("wormnet")

USER_ERRORS = (ValueError, OSError, ArithmeticError)


def _scenario(args):
    scn = load_scenario(args.scenario)
    if args.horizon is not None:
        scn = scn.with_(horizon=args.horizon)
    return scn


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8")
    print(out / name)


def _summary_csv(summ, scn) -> str:
    rows = []
    for stat in ("median", "q1", "q3"):
        vals = summ.row(stat)
        rec = {k: "" for k in CSV_FIELDS}
        for k, v in vals.items():
            rec[k] = "inf" if v == float("inf") else repr(float(v))
        rec["y"] = repr(compute_y(scn)) if sum(scn.initial_prey) > 0 else ""
        rec["censored_flags"] = "|".join(sorted(k for k, v in vals.items() if v == float("inf")))
        rec["stat"] = stat
        rows.append(rec)
    rec = {k: "" for k in CSV_FIELDS}
    rec.update({k: repr(float(v)) for k, v in summ.not_reached.items()})
    rec["stat"] = "not_reached"
    rows.append(rec)
    return write_metrics_csv(rows, lead_fields=("stat",))


def cmd_ode(args) -> int:
    from .ode import OdeSettings, integrate, trajectory_metrics

    scn = _scenario(args)
    settings = OdeSettings(step=args.step)
    traj = integrate(scn, settings)
    m = trajectory_metrics(traj, scn, settings)
    out = Path(args.out)
    _write(out, "trajectory.csv", traj.to_csv())
    _write(out, "metrics.csv", write_metrics_csv([metrics_record(m, scn)]))
    return 0


def _runs_csv(results, scn) -> str:
    rows = []
    for r in results:
        rec = metrics_record(r, scn)
        rec["seed"] = r.seed
        rows.append(rec)
    return write_metrics_csv(rows, lead_fields=("seed",))


def cmd_sim(args) -> int:
    from .metrics import summarize
    from .sim import run_batch

    scn = _scenario(args)
    if args.runs < 1:
        raise ValueError("--runs must be >= 1")
    results = run_batch(scn, range(args.seed, args.seed + args.runs), workers=args.workers)
    out = Path(args.out)
    _write(out, "runs.csv", _runs_csv(results, scn))
    _write(out, "summary.csv", _summary_csv(summarize(results, scn), scn))
    return 0


def cmd_trace_stats(args) -> int:
    from .trace import estimate_groups, load_trace, stats_tables, trace_stats

    encs, arrivals = load_trace(args.trace, args.format)
    stats = trace_stats(encs, window=args.window, arrivals=arrivals)
    est = estimate_groups(encs, stats)
    out = Path(args.out)
    for name, text in stats_tables(stats, est).items():
        _write(out, name, text)
    return 0


def cmd_trace_sim(args) -> int:
    from .metrics import summarize
    from .trace import load_trace, prepare_trace, replay_batch

    scn = _scenario(args)
    if args.runs < 1:
        raise ValueError("--runs must be >= 1")
    encs, arrivals = load_trace(args.trace, args.format)
    tr = prepare_trace(encs, arrivals=arrivals, window=args.window)
    results = replay_batch(tr, scn, range(args.seed, args.seed + args.runs))
    out = Path(args.out)
    _write(out, "runs.csv", _runs_csv(results, scn))
    _write(out, "summary.csv", _summary_csv(summarize(results, scn), scn))
    return 0


def cmd_sweep(args) -> int:
    from .sweep import load_sweep, plot_script, run_sweep, sweep_csv

    spec = load_sweep(args.sweep)
    kw = {}
    if args.runs is not None:
        kw["runs"] = args.runs
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.step is not None:
        kw["step"] = args.step
    if args.horizon is not None:
        kw["base"] = spec.base.with_(horizon=args.horizon)
    if kw:
        from dataclasses import replace

        spec = replace(spec, **kw)
    rows, errors = run_sweep(spec)
    out = Path(args.out)
    _write(out, "sweep.csv", sweep_csv(rows))
    _write(out, "plot_sweep.py", plot_script(spec.param, "sweep.csv"))
    if errors:
        _write(out, "sweep_errors.csv", "value,error\n" + "".join(f"{v!r},\"{e}\"\n" for v, e in errors))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wormnet", description="Predator-prey worm models for encounter networks")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, scenario=True, runs=True):
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario YAML file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--horizon", type=float, default=None, help="override the scenario horizon (s)")
        if runs:
            p.add_argument("--runs", type=int, default=100)
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("ode", help="integrate the mean-field model")
    common(p, runs=False)
    p.add_argument("--step", type=float, default=1.0, help="RK4 step (s)")
    p.set_defaults(func=cmd_ode)

    p = sub.add_parser("sim", help="Monte Carlo encounter-level simulation")
    common(p)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("trace", help="trace statistics and replay")
    tsub = p.add_subparsers(dest="trace_verb", required=True)
    for name, func, needs_scn in (("stats", cmd_trace_stats, False), ("sim", cmd_trace_sim, True)):
        q = tsub.add_parser(name)
        q.add_argument("trace", help="association or encounter CSV")
        q.add_argument("--format", choices=("auto", "assoc", "enc"), default="auto")
        q.add_argument("--window", type=float, default=86400.0, help="batch-cluster window (s)")
        common(q, scenario=needs_scn, runs=needs_scn)
        q.set_defaults(func=func)

    p = sub.add_parser("sweep", help="parameter sweep from a sweep YAML file")
    p.add_argument("sweep", help="sweep YAML file")
    p.add_argument("--out", default="out")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage; that is a user error here
        return 1 if exc.code == 2 else int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"wormnet: error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
