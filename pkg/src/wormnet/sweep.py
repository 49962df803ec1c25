"""Parameter sweeps over the ODE, stochastic and trace engines.

Results are written in long format, one row per swept value per metric,
together with a small matplotlib script that charts each metric.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .config import ConfigError, load_scenario, scenario_from_dict
from .metrics import METRIC_NAMES, summarize
from .model import GroupParams, Scenario

log = logging.getLogger(__name__)

PARAMS = ("y", "beta", "n", "c", "i", "p", "d", "group_size", "beta11", "beta12")
ENGINES = ("ode", "sim", "trace")
SWEEP_FIELDS = ("param", "value", "metric", "median", "q1", "q3", "censored")
OUT_METRICS = tuple(METRIC_NAMES) + ("ti_rel", "mi_rel")


@dataclass(frozen=True)
class SweepSpec:
    base: Scenario
    param: str
    values: tuple
    engine: str = "sim"
    runs: int = 100
    seed: int = 0
    step: float = 1.0
    trace: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.param not in PARAMS:
            raise ConfigError(f"param: {self.param!r} is not one of {', '.join(PARAMS)}")
        if self.engine not in ENGINES:
            raise ConfigError(f"engine: {self.engine!r} is not one of {', '.join(ENGINES)}")
        if not self.values:
            raise ConfigError("values: need at least one value")
        if self.runs < 1:
            raise ConfigError("runs: must be >= 1")
        if self.engine == "trace":
            if self.trace is None:
                raise ConfigError("trace: the trace engine needs a trace file")
            if self.param in ("beta", "n", "group_size", "beta11", "beta12"):
                raise ConfigError(f"param: {self.param} is fixed by the trace and cannot be swept")


def load_sweep(path) -> SweepSpec:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    allowed = {"scenario", "param", "values", "engine", "runs", "seed", "step", "trace", "workers"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"sweep: unknown key(s) {', '.join(unknown)}")
    for key in ("scenario", "param", "values"):
        if key not in data:
            raise ConfigError(f"sweep: {key} is required")
    base = data["scenario"]
    if isinstance(base, str):
        base = load_scenario(path.parent / base)
    else:
        base = scenario_from_dict(base)
    trace = data.get("trace")
    if trace is not None:
        trace = str(path.parent / trace)
    return SweepSpec(base=base, param=data["param"], values=tuple(float(v) for v in data["values"]),
                     engine=data.get("engine", "sim"), runs=int(data.get("runs", 100)),
                     seed=int(data.get("seed", 0)), step=float(data.get("step", 1.0)), trace=trace,
                     workers=int(data.get("workers", 1)))


def apply_param(scn: Scenario, name: str, value: float) -> Scenario:
    """Scenario with one swept parameter set.

    ``y`` rescales predator seeds to value x total prey seeds, keeping their
    split over groups.  ``beta`` sets every intra-group rate, ``n`` rescales
    group sizes to the new total, ``group_size`` sets the second group's
    size (the only group's size in a one-group scenario).
    """
    if name == "c":
        return scn.with_(cooperation=value)
    if name == "i":
        return scn.with_(immunization=value)
    if name == "p":
        return scn.with_(on_prob=value)
    if name == "d":
        return scn.with_(delay=value)
    if name == "y":
        total = value * sum(scn.initial_prey)
        cur = list(scn.initial_predator)
        share = [c / sum(cur) for c in cur] if sum(cur) > 0 else [1.0] + [0.0] * (len(cur) - 1)
        return scn.with_(initial_predator=tuple(round(total * s, 9) for s in share))
    if name == "beta":
        return scn.with_(groups=tuple(replace(gp, intra_rate=value) for gp in scn.groups))
    if name == "beta11":
        return scn.with_(groups=(replace(scn.groups[0], intra_rate=value),) + scn.groups[1:])
    if name == "beta12":
        if scn.n_groups < 2:
            raise ConfigError("beta12 needs at least two groups")
        rates = [list(r) for r in scn.inter_rates]
        rates[0][1] = rates[1][0] = value
        return scn.with_(inter_rates=tuple(tuple(r) for r in rates))
    if name == "n":
        total = scn.total_nodes
        sizes = [max(1, int(round(gp.n_nodes * value / total))) for gp in scn.groups]
        return scn.with_(groups=tuple(GroupParams(s, gp.intra_rate) for s, gp in zip(sizes, scn.groups)))
    if name == "group_size":
        k = 1 if scn.n_groups > 1 else 0
        groups = list(scn.groups)
        groups[k] = GroupParams(int(round(value)), groups[k].intra_rate)
        return scn.with_(groups=tuple(groups))
    raise ConfigError(f"unknown sweep parameter {name!r}")


def _point(spec: SweepSpec, value: float):
    scn = apply_param(spec.base, spec.param, value)
    if spec.engine == "ode":
        from .ode import OdeSettings, integrate, trajectory_metrics

        settings = OdeSettings(step=spec.step)
        m = trajectory_metrics(integrate(scn, settings), scn, settings)
        summ = summarize([m], scn)
    elif spec.engine == "sim":
        from .sim import run_batch

        summ = summarize(run_batch(scn, range(spec.seed, spec.seed + spec.runs)), scn)
    else:
        from .trace import load_trace, prepare_trace, replay_batch

        encs, arrivals = load_trace(spec.trace)
        summ = summarize(replay_batch(prepare_trace(encs, arrivals=arrivals), scn,
                                      range(spec.seed, spec.seed + spec.runs)), scn)
    rows = []
    for metric in OUT_METRICS:
        if metric not in summ.median:
            continue
        rows.append({"param": spec.param, "value": value, "metric": metric,
                     "median": summ.median[metric], "q1": summ.q1[metric], "q3": summ.q3[metric],
                     "censored": summ.not_reached.get(metric, 0)})
    return rows


def _safe_point(spec, value):
    try:
        return _point(spec, value), None
    except (ValueError, ArithmeticError) as exc:
        return [], f"{type(exc).__name__}: {exc}"


def run_sweep(spec: SweepSpec):
    """Rows in sweep order plus a list of (value, error) for failed points."""
    if spec.workers > 1 and len(spec.values) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as ex:
            results = list(ex.map(_safe_point, [spec] * len(spec.values), spec.values))
    else:
        results = [_safe_point(spec, v) for v in spec.values]
    rows, errors = [], []
    for v, (r, err) in zip(spec.values, results):
        if err is not None:
            log.warning("sweep point %s=%s failed: %s", spec.param, v, err)
            errors.append((v, err))
        rows.extend(r)
    return rows, errors


def _cell(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "inf" if math.isinf(x) else repr(x)
    return str(x)


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_FIELDS)
    for r in rows:
        w.writerow([_cell(r[k]) for k in SWEEP_FIELDS])
    return buf.getvalue()


def read_sweep_csv(text: str) -> list[dict]:
    out = []
    for r in csv.DictReader(io.StringIO(text)):
        out.append({"param": r["param"], "value": float(r["value"]), "metric": r["metric"],
                    "median": float(r["median"]), "q1": float(r["q1"]), "q3": float(r["q3"]),
                    "censored": int(r["censored"])})
    return out


PLOT_TEMPLATE = '''"""Charts each metric against the swept parameter from {csv_name}."""
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

rows = defaultdict(list)
with open("{csv_name}") as fh:
    for r in csv.DictReader(fh):
        rows[r["metric"]].append(r)

metrics = sorted(rows)
fig, axes = plt.subplots(len(metrics), 1, figsize=(6, 2.6 * len(metrics)), squeeze=False)
for ax, metric in zip(axes[:, 0], metrics):
    pts = [(float(r["value"]), float(r["median"]), float(r["q1"]), float(r["q3"])) for r in rows[metric]]
    pts = [p for p in pts if all(abs(x) != float("inf") for x in p)]
    if pts:
        x, med, lo, hi = zip(*pts)
        ax.errorbar(x, med, yerr=[[m - l for m, l in zip(med, lo)], [h - m for m, h in zip(med, hi)]], marker="o")
    ax.set_xlabel("{param}")
    ax.set_ylabel(metric)
fig.tight_layout()
fig.savefig("{stem}.png", dpi=120)
'''


def plot_script(param: str, csv_name: str = "sweep.csv") -> str:
    return PLOT_TEMPLATE.format(csv_name=csv_name, param=param, stem=Path(csv_name).stem)

