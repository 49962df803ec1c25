"""The six prey/predator metrics (TI, MI, TL, AL, TA, TR), Y and normalisation.

TI  nodes ever prey-infected          MI  peak simultaneous prey-infected
TL  summed prey lifespan (s)          AL  TL / TI
TA  time until every susceptible and prey node carries predator
TR  time until the last prey is gone

Time metrics that never happen inside the horizon are ``None`` and named in
``censored``.  TL stays numeric when censored (it is truncated at the
horizon) so it can still be plotted, but the flag travels with it.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .events import EventKind, EventLog
from .model import Scenario

METRIC_NAMES = ("ti", "mi", "tl", "al", "ta", "tr")
CSV_FIELDS = ("ti", "mi", "tl", "al", "ta", "tr", "ti_rel", "mi_rel", "y", "censored_flags")


class DegenerateDenominator(ValueError):
    pass


class DivisionByZero(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class Metrics:
    ti: float
    mi: float
    tl: float
    al: float | None = None
    ta: float | None = None
    tr: float | None = None
    censored: frozenset = field(default_factory=frozenset)

    def get(self, name: str):
        return getattr(self, name)


@dataclass(frozen=True)
class RunMetrics(Metrics):
    seed: int = 0


@dataclass(frozen=True)
class RelativeMetrics:
    ti_rel: float
    mi_rel: float
    tl: float
    al: float | None
    ta: float | None
    tr: float | None


def compute_y(scn: Scenario) -> float:
    prey = sum(scn.initial_prey)
    if prey <= 0:
        raise DivisionByZero("Y needs at least one initial prey-infected node")
    return sum(scn.initial_predator) / prey


def cooperative_susceptible(scn: Scenario) -> float:
    """N* = c (1 - i) sum(N_n): the nodes prey can ever reach."""
    return scn.cooperation * (1.0 - scn.immunization) * scn.total_nodes


def relative_metrics(m: Metrics, scn: Scenario) -> RelativeMetrics:
    n_star = cooperative_susceptible(scn)
    if n_star <= 0:
        raise DegenerateDenominator("c (1 - i) N is zero; relative metrics undefined")
    return RelativeMetrics(m.ti / n_star, m.mi / n_star, m.tl, m.al, m.ta, m.tr)


def finish_metrics(ti, mi, tl, ta, tr, prey_open: bool, cls=Metrics, **extra) -> Metrics:
    ti, mi, tl = float(ti), float(mi), float(tl)
    ta = None if ta is None else float(ta)
    tr = None if tr is None else float(tr)
    censored = set()
    if prey_open:
        censored.update(("tl", "al"))
    if ta is None:
        censored.add("ta")
    if tr is None:
        censored.add("tr")
    al = tl / ti if ti > 0 else None
    return cls(ti=ti, mi=mi, tl=tl, al=al, ta=ta, tr=tr,
               censored=frozenset(censored), **extra)


# compartment codes used while scanning a log
_S, _SP, _A, _B, _R, _AWAY = range(6)


def metrics_from_log(log: EventLog, scn: Scenario | None = None, *, t_batch: float | None = None,
                     horizon: float | None = None) -> Metrics:
    """Single pass over a time-ordered log.

    ``t_batch`` (time of the last batch arrival) and ``horizon`` default to
    the scenario's values.  Prey episodes still open at the horizon are
    closed there and flagged.
    """
    if t_batch is None:
        t_batch = scn.last_arrival_time() if scn is not None else 0.0
    if horizon is None:
        horizon = scn.horizon if scn is not None else (float(log.t[-1]) if len(log) else 0.0)

    comp: dict[int, int] = {}
    away_comp: dict[int, int] = {}
    immune: set[int] = set()
    prey_start: dict[int, float] = {}
    ever_prey: set[int] = set()
    tl = 0.0
    n_prey = mi = 0
    n_sa = 0
    prey_zero_at = 0.0
    sa_zero_at = 0.0

    def set_comp(node, new, t):
        nonlocal tl, n_prey, mi, n_sa, prey_zero_at, sa_zero_at
        old = comp.get(node)
        if old == new:
            return
        if old == _A:
            tl += t - prey_start.pop(node)
            n_prey -= 1
            if n_prey == 0:
                prey_zero_at = t
        if old in (_S, _SP, _A):
            n_sa -= 1
            if n_sa == 0:
                sa_zero_at = t
        comp[node] = new
        if new == _A:
            prey_start[node] = t
            n_prey += 1
            mi = max(mi, n_prey)
        if new in (_S, _SP, _A):
            n_sa += 1

    for t, kind, a, b in log:
        if kind == EventKind.ARRIVE:
            if comp.get(a) == _AWAY:
                set_comp(a, away_comp.pop(a), t)
            else:
                set_comp(a, _S, t)
        elif kind == EventKind.ARRIVE_IMMUNE:
            immune.add(a)
            set_comp(a, _SP, t)
        elif kind == EventKind.PREY_INFECT:
            ever_prey.add(a)
            set_comp(a, _A, t)
        elif kind in (EventKind.VACCINATE, EventKind.TERMINATE, EventKind.INJECT):
            set_comp(a, _B, t)
        elif kind == EventKind.REMOVE:
            set_comp(a, _R, t)
        elif kind == EventKind.RESUSCEPTIBLE:
            set_comp(a, _SP if a in immune else _S, t)
        elif kind == EventKind.DEPART:
            away_comp[a] = comp.get(a, _S)
            set_comp(a, _AWAY, t)
        # OnOffToggle and Migrate do not change compartments

    prey_open = n_prey > 0
    for start in prey_start.values():
        tl += horizon - start
    tr = max(prey_zero_at, t_batch) if n_prey == 0 else None
    ta = max(sa_zero_at, t_batch) if n_sa == 0 else None
    return finish_metrics(len(ever_prey), mi, tl, ta, tr, prey_open)


def _quantile(values: np.ndarray, q: float) -> float:
    """Linear-interpolated quantile that tolerates +inf entries."""
    v = np.sort(values)
    pos = q * (len(v) - 1)
    lo, hi = int(math.floor(pos)), int(math.ceil(pos))
    frac = pos - lo
    if frac == 0 or v[lo] == v[hi]:
        return float(v[lo])
    if math.isinf(v[hi]):
        return math.inf
    return float(v[lo] + (v[hi] - v[lo]) * frac)


@dataclass(frozen=True)
class MetricsSummary:
    runs: int
    median: dict
    q1: dict
    q3: dict
    not_reached: dict

    def row(self, which: str) -> dict:
        return getattr(self, which)


def summarize(results, scn: Scenario | None = None) -> MetricsSummary:
    """Median and quartiles per metric; not-reached time metrics count as +inf."""
    results = list(results)
    if not results:
        raise ValueError("need at least one run to summarise")
    names = list(METRIC_NAMES)
    cols = {}
    for name in names:
        cols[name] = np.array([math.inf if r.get(name) is None else r.get(name) for r in results], float)
    if scn is not None and cooperative_susceptible(scn) > 0:
        n_star = cooperative_susceptible(scn)
        cols["ti_rel"] = cols["ti"] / n_star
        cols["mi_rel"] = cols["mi"] / n_star
    med, q1, q3 = {}, {}, {}
    for name, col in cols.items():
        q1[name] = _quantile(col, 0.25)
        med[name] = _quantile(col, 0.5)
        q3[name] = _quantile(col, 0.75)
    not_reached = {name: sum(1 for r in results if name in r.censored) for name in names}
    return MetricsSummary(len(results), med, q1, q3, not_reached)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return repr(float(x))


def _parse(s: str):
    if s == "":
        return None
    return float(s)


def metrics_record(m: Metrics, scn: Scenario | None = None) -> dict:
    """One row in the shared ``ti,mi,tl,al,ta,tr,ti_rel,mi_rel,y,censored_flags`` format."""
    ti_rel = mi_rel = y = None
    if scn is not None:
        if cooperative_susceptible(scn) > 0:
            rel = relative_metrics(m, scn)
            ti_rel, mi_rel = rel.ti_rel, rel.mi_rel
        if sum(scn.initial_prey) > 0:
            y = compute_y(scn)
    return {
        "ti": _fmt(m.ti), "mi": _fmt(m.mi), "tl": _fmt(m.tl), "al": _fmt(m.al),
        "ta": _fmt(m.ta), "tr": _fmt(m.tr), "ti_rel": _fmt(ti_rel), "mi_rel": _fmt(mi_rel),
        "y": _fmt(y), "censored_flags": "|".join(sorted(m.censored)),
    }


def write_metrics_csv(rows, lead_fields=()) -> str:
    """Serialise metric records; ``lead_fields`` name extra columns placed first."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(lead_fields) + list(CSV_FIELDS), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def read_metrics_csv(text: str) -> list[dict]:
    """Inverse of ``write_metrics_csv``: numeric columns parsed, blanks -> None."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        rec = {}
        for k, v in row.items():
            if k == "censored_flags":
                rec[k] = frozenset(x for x in v.split("|") if x)
            elif k in CSV_FIELDS:
                rec[k] = _parse(v)
            else:
                rec[k] = v
        out.append(rec)
    return out


def metrics_from_record(rec: dict) -> Metrics:
    return Metrics(rec["ti"], rec["mi"], rec["tl"], rec["al"], rec["ta"], rec["tr"], rec["censored_flags"])
