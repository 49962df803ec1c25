"""WLAN association traces: parsing, encounter derivation, statistics and replay.

Two nodes meet when they are associated with the same access point over
intervals that overlap for a positive length of time.  Each encounter is a
single transfer opportunity whatever its duration.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ._replaykernel import replay_kernel
from .events import EventLog
from .metrics import RunMetrics, metrics_from_log
from .model import GroupParams, ModelError, Scenario, as_int_counts, check_scenario
from .sim import poisson_encounters

log = logging.getLogger(__name__)

DAY = 86400.0


class TraceError(ValueError):
    pass


class EmptyInput(TraceError):
    pass


class FormatError(TraceError):
    pass


class UnknownNode(ModelError):
    pass


class SingleBatch(UserWarning):
    pass


@dataclass(frozen=True, slots=True)
class AssociationRecord:
    node_id: str
    ap_id: str
    start_ts: float
    end_ts: float

    def __post_init__(self):
        if not self.start_ts < self.end_ts:
            raise ValueError(f"start_ts {self.start_ts} must be before end_ts {self.end_ts}")


@dataclass(frozen=True, slots=True, order=True)
class EncounterEvent:
    t_start: float
    t_end: float
    node_a: str
    node_b: str

    def __post_init__(self):
        if self.node_a == self.node_b:
            raise ValueError("an encounter needs two distinct nodes")
        if not self.t_start < self.t_end:
            raise ValueError("encounter interval must have positive length")
        if self.node_b < self.node_a:
            a, b = self.node_b, self.node_a
            object.__setattr__(self, "node_a", a)
            object.__setattr__(self, "node_b", b)


@dataclass(frozen=True)
class Reject:
    line_no: int
    line: str
    reason: str


def _lines(stream):
    if isinstance(stream, (bytes, bytearray)):
        text = bytes(stream).decode("utf-8")
    elif isinstance(stream, str):
        text = stream
    else:
        data = stream.read()
        text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    return text.splitlines()


def _parse_rows(stream, header_first: str, ncols: int, build):
    rows, rejects = [], []
    n_data = 0
    for no, line in enumerate(_lines(stream), start=1):
        if not line.strip():
            continue
        cells = next(csv.reader([line]))
        if no == 1 and cells and cells[0].strip().lower() == header_first:
            continue
        n_data += 1
        if len(cells) != ncols:
            rejects.append(Reject(no, line, f"expected {ncols} fields, got {len(cells)}"))
            continue
        try:
            rows.append(build([c.strip() for c in cells]))
        except ValueError as exc:
            rejects.append(Reject(no, line, str(exc)))
    if n_data == 0:
        raise EmptyInput("no data rows")
    if len(rejects) * 2 > n_data:
        raise FormatError(f"{len(rejects)} of {n_data} lines malformed; first: line "
                          f"{rejects[0].line_no}: {rejects[0].reason}")
    return rows, rejects


def _num(s: str) -> float:
    x = float(s)
    if not math.isfinite(x):
        raise ValueError(f"non-finite timestamp {s!r}")
    return x


def parse_associations(stream) -> tuple[list[AssociationRecord], list[Reject]]:
    """Parse ``node_id,ap_id,start_ts,end_ts`` rows, sorted by start time."""

    def build(c):
        if not c[0] or not c[1]:
            raise ValueError("empty node or AP id")
        return AssociationRecord(c[0], c[1], _num(c[2]), _num(c[3]))

    recs, rejects = _parse_rows(stream, "node_id", 4, build)
    recs.sort(key=lambda r: (r.start_ts, r.end_ts, r.node_id, r.ap_id))
    return recs, rejects


def parse_encounters(stream) -> tuple[list[EncounterEvent], list[Reject]]:
    """Parse ``t_start,t_end,node_a,node_b`` rows, sorted by start time."""
    encs, rejects = _parse_rows(stream, "t_start", 4, lambda c: EncounterEvent(_num(c[0]), _num(c[1]), c[2], c[3]))
    encs.sort()
    return encs, rejects


def associations_to_csv(recs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_id", "ap_id", "start_ts", "end_ts"])
    for r in recs:
        w.writerow([r.node_id, r.ap_id, repr(float(r.start_ts)), repr(float(r.end_ts))])
    return buf.getvalue()


def encounters_to_csv(encs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_start", "t_end", "node_a", "node_b"])
    for e in encs:
        w.writerow([repr(float(e.t_start)), repr(float(e.t_end)), e.node_a, e.node_b])
    return buf.getvalue()


def merge_intervals(intervals):
    """Union of strictly overlapping intervals; touching ones stay separate."""
    out = []
    for s, e in sorted(intervals):
        if out and s < out[-1][1]:
            out[-1][1] = max(out[-1][1], e)
        else:
            out.append([s, e])
    return [(s, e) for s, e in out]


def derive_encounters(assocs) -> list[EncounterEvent]:
    """Pairwise co-location intervals, one event per merged interval per pair."""
    by_ap = defaultdict(list)
    for r in assocs:
        by_ap[r.ap_id].append(r)
    per_pair = defaultdict(list)
    for recs in by_ap.values():
        recs.sort(key=lambda r: r.start_ts)
        active: list[AssociationRecord] = []
        for r in recs:
            active = [q for q in active if q.end_ts > r.start_ts]
            for q in active:
                if q.node_id == r.node_id:
                    continue
                lo = max(q.start_ts, r.start_ts)
                hi = min(q.end_ts, r.end_ts)
                if hi > lo:
                    key = (q.node_id, r.node_id) if q.node_id < r.node_id else (r.node_id, q.node_id)
                    per_pair[key].append((lo, hi))
            active.append(r)
    out = [EncounterEvent(s, e, a, b)
           for (a, b), ivs in per_pair.items() for s, e in merge_intervals(ivs)]
    out.sort()
    return out


def first_seen(assocs) -> dict[str, float]:
    arr: dict[str, float] = {}
    for r in assocs:
        if r.start_ts < arr.get(r.node_id, math.inf):
            arr[r.node_id] = r.start_ts
    return arr


def batch_clusters(arrivals: dict[str, float], window: float = DAY) -> list[tuple[float, list[str]]]:
    """Group arrival times chained by gaps of at most ``window``."""
    order = sorted(arrivals, key=lambda n: (arrivals[n], n))
    clusters: list[tuple[float, list[str]]] = []
    last = -math.inf
    for n in order:
        t = arrivals[n]
        if not clusters or t - last > window:
            clusters.append((t, []))
        clusters[-1][1].append(n)
        last = t
    return clusters


@dataclass
class TraceStats:
    nodes: list[str]
    total: dict[str, int]
    unique: dict[str, int]
    rate: dict[str, float]
    arrival: dict[str, float]
    clusters: list[tuple[float, list[str]]]
    t_end: float
    top_share: np.ndarray = field(repr=False)  # share held by the top k% of nodes, k = 0..100

    def share_of_top(self, frac: float) -> float:
        return float(np.interp(frac * 100, np.arange(101), self.top_share))

    @property
    def batch_sizes(self) -> list[int]:
        return [len(m) for _, m in self.clusters]

    @property
    def median_unique(self) -> float:
        return float(np.median([self.unique[n] for n in self.nodes]))


def trace_stats(encs, window: float = DAY, arrivals: dict[str, float] | None = None) -> TraceStats:
    if not encs:
        raise EmptyInput("no encounters")
    total: dict[str, int] = defaultdict(int)
    peers: dict[str, set] = defaultdict(set)
    first: dict[str, float] = {}
    t_end = -math.inf
    for e in encs:
        for u, v in ((e.node_a, e.node_b), (e.node_b, e.node_a)):
            total[u] += 1
            peers[u].add(v)
            if e.t_start < first.get(u, math.inf):
                first[u] = e.t_start
        t_end = max(t_end, e.t_end)
    if arrivals:
        for n, t in arrivals.items():
            first[n] = min(t, first.get(n, math.inf))
            total.setdefault(n, 0)
    nodes = sorted(first)
    rate = {n: total[n] / (t_end - first[n]) if t_end > first[n] else 0.0 for n in nodes}

    counts = np.sort(np.array([total[n] for n in nodes], float))[::-1]
    cum = np.concatenate([[0.0], np.cumsum(counts)]) / max(counts.sum(), 1.0)
    k = np.arange(101) / 100 * len(nodes)
    top = np.interp(k, np.arange(len(nodes) + 1), cum)
    return TraceStats(nodes=nodes, total=dict(total), unique={n: len(peers[n]) for n in nodes}, rate=rate,
                      arrival=first, clusters=batch_clusters(first, window), t_end=float(t_end), top_share=top)


@dataclass
class GroupEstimate:
    group_of: dict[str, int]
    sizes: list[int]
    starts: list[float]
    beta: np.ndarray
    counts: np.ndarray
    t_end: float = 0.0


def estimate_groups(encs, stats: TraceStats) -> GroupEstimate:
    """One group per arrival batch; rates from encounter counts over each pair class's shared span."""
    group_of = {n: g for g, (_, members) in enumerate(stats.clusters) for n in members}
    G = len(stats.clusters)
    if G == 1:
        import warnings
        warnings.warn("all nodes arrived in one batch; a single group is returned", SingleBatch, stacklevel=2)
    sizes = [len(m) for _, m in stats.clusters]
    starts = [t for t, _ in stats.clusters]
    counts = np.zeros((G, G))
    for e in encs:
        ga, gb = group_of[e.node_a], group_of[e.node_b]
        counts[ga, gb] += 1
        if ga != gb:
            counts[gb, ga] += 1
    beta = np.zeros((G, G))
    for n in range(G):
        for m in range(G):
            pairs = sizes[n] * (sizes[n] - 1) / 2 if n == m else sizes[n] * sizes[m]
            span = stats.t_end - max(starts[n], starts[m])
            if pairs > 0 and span > 0:
                beta[n, m] = counts[n, m] / (pairs * span)
    return GroupEstimate(group_of, sizes, starts, beta, counts, stats.t_end)


def scenario_for_trace(est: GroupEstimate, **kw) -> Scenario:
    """Scenario whose group sizes and rates come from a trace estimate."""
    beta = est.beta
    groups = tuple(GroupParams(s, float(beta[g, g])) for g, s in enumerate(est.sizes))
    inter = tuple(tuple(0.0 if n == m else float(beta[n, m]) for m in range(len(groups))) for n in range(len(groups)))
    if est.t_end > 0:
        kw.setdefault("horizon", est.t_end)
    return Scenario(groups=groups, inter_rates=inter, **kw)


# synthetic fixtures

def synthetic_two_group(sizes=(180, 20), beta11=3.6e-6, beta22=3.3e-6, beta12=4e-7, gap=8.7 * DAY,
                        span=20 * DAY, duration=60.0, skew=0.0, seed=0):
    """Association records for a two-batch population with Poisson encounters.

    Every encounter is placed at its own access point, so deriving
    encounters from the records returns exactly the sampled set.  Each node
    also gets a solo record at its batch start to fix its arrival time.
    ``skew`` is the sigma of lognormal per-node activity weights.
    """
    rng = np.random.default_rng(seed)
    n_total = sum(sizes)
    w = rng.lognormal(0.0, skew, n_total) if skew > 0 else None
    beta = np.array([[beta11, beta12], [beta12, beta22]])
    starts = np.array([0.0, gap])
    t, a, b = poisson_encounters(sizes, beta, span - duration, starts=starts, weights=w, seed=seed + 1)
    width = len(str(n_total - 1))
    name = [f"n{k:0{width}d}" for k in range(n_total)]
    recs = []
    offs = np.concatenate([[0], np.cumsum(sizes)])
    for g in range(len(sizes)):
        for k in range(offs[g], offs[g + 1]):
            recs.append(AssociationRecord(name[k], f"solo-{name[k]}", float(starts[g]), float(starts[g]) + 1.0))
    for j in range(len(t)):
        ap = f"ap{j}"
        recs.append(AssociationRecord(name[a[j]], ap, float(t[j]), float(t[j]) + duration))
        recs.append(AssociationRecord(name[b[j]], ap, float(t[j]), float(t[j]) + duration))
    recs.sort(key=lambda r: (r.start_ts, r.end_ts, r.node_id, r.ap_id))
    return recs


def encounters_from_arrays(t, a, b, duration=1.0, names=None) -> list[EncounterEvent]:
    """Wrap numeric encounter arrays (as from ``poisson_encounters``)."""
    if names is None:
        width = len(str(int(max(a.max(initial=0), b.max(initial=0)))))
        names = lambda k: f"n{k:0{width}d}"  # noqa: E731
    return [EncounterEvent(float(t[j]), float(t[j]) + duration, names(int(a[j])), names(int(b[j])))
            for j in range(len(t))]


# replay

def _kind_arrays(scn: Scenario):
    k = scn.flags().per_group(2)
    return k["s_a"], k["s_b"], k["sp_b"], k["a_b"]


@dataclass
class PreparedTrace:
    """Encounters converted to index arrays once, for repeated replays."""

    names: list[str]
    index: dict[str, int]
    first: dict[str, float]
    groups: dict[str, int]
    enc_t: np.ndarray
    enc_a: np.ndarray
    enc_b: np.ndarray
    t_end: float


def prepare_trace(encs, groups: dict[str, int] | None = None,
                  arrivals: dict[str, float] | None = None, window: float = DAY) -> PreparedTrace:
    """Groups default to arrival batches and arrivals to each node's first encounter."""
    encs = sorted(encs)
    first: dict[str, float] = {}
    for e in encs:
        for n in (e.node_a, e.node_b):
            if e.t_start < first.get(n, math.inf):
                first[n] = e.t_start
    if arrivals:
        for n, t in arrivals.items():
            first[n] = min(t, first.get(n, math.inf))
    if groups is None:
        groups = {n: g for g, (_, m) in enumerate(batch_clusters(first, window)) for n in m}
    names = sorted(first, key=lambda n: (first[n], n))
    idx = {n: k for k, n in enumerate(names)}
    t_end = max((e.t_end for e in encs), default=max(first.values(), default=0.0))
    return PreparedTrace(
        names, idx, first, dict(groups),
        np.array([e.t_start for e in encs], float),
        np.array([idx[e.node_a] for e in encs], np.int64),
        np.array([idx[e.node_b] for e in encs], np.int64),
        float(t_end),
    )


def replay_sim(encs, scn: Scenario, seed: int, *, groups: dict[str, int] | None = None,
               arrivals: dict[str, float] | None = None, prey_nodes=(), predator_nodes=(),
               horizon: float | None = None) -> tuple[EventLog, RunMetrics]:
    """Drive the worm interaction rules with a recorded encounter sequence.

    ``encs`` is an encounter list or a ``PreparedTrace``.  Prey seeds go in
    at their group's first arrival, predator seeds at max(delay, group
    start).  ``prey_nodes``/``predator_nodes`` pin specific seeds instead of
    drawing them.
    """
    check_scenario(scn)
    tr = encs if isinstance(encs, PreparedTrace) else prepare_trace(encs, groups, arrivals)
    first, idx = tr.first, tr.index
    for n in itertools.chain(prey_nodes, predator_nodes):
        if n not in first:
            raise UnknownNode(f"node {n!r} does not appear in the trace")
    G = scn.n_groups
    node_grp = np.array([min(tr.groups.get(n, 0), G - 1) for n in tr.names], np.int64)
    arr_t = np.array([first[n] for n in tr.names], float)
    arr_node = np.arange(len(tr.names), dtype=np.int64)
    gstart = [math.inf] * G
    for k, g in enumerate(node_grp):
        gstart[g] = min(gstart[g], arr_t[k])

    inj = []  # (time, kind, group, node)
    prey = as_int_counts(scn.initial_prey, "initial_prey")
    pred = as_int_counts(scn.initial_predator, "initial_predator")
    if prey_nodes:
        inj += [(first[n], 0, int(node_grp[idx[n]]), idx[n]) for n in prey_nodes]
    else:
        inj += [(gstart[g], 0, g, -1) for g in range(G) for _ in range(prey[g]) if gstart[g] < math.inf]
    if predator_nodes:
        inj += [(max(scn.delay, first[n]), 1, int(node_grp[idx[n]]), idx[n]) for n in predator_nodes]
    else:
        inj += [(max(scn.delay, gstart[g]), 1, g, -1) for g in range(G) for _ in range(pred[g])
                if gstart[g] < math.inf]
    inj.sort()

    ks_a, ks_b, ksp_b, ka_b = _kind_arrays(scn)
    L = replay_kernel(
        tr.enc_t, tr.enc_a, tr.enc_b,
        arr_node, arr_t, node_grp, float(scn.cooperation), float(scn.immunization), float(scn.on_prob),
        float(scn.on_off_interval), ks_a, ks_b, ksp_b, ka_b,
        np.array([x[0] for x in inj], float), np.array([x[1] for x in inj], np.int64),
        np.array([x[2] for x in inj], np.int64), np.array([x[3] for x in inj], np.int64),
        int(seed) % 2 ** 32,
    )
    ev = EventLog(L[:, 0].copy(), L[:, 1].astype(np.int8), L[:, 2].astype(np.int64), L[:, 3].astype(np.int64))
    if horizon is None:
        horizon = tr.t_end
    t_batch = max((t for t in gstart if t < math.inf), default=0.0)
    m = metrics_from_log(ev, t_batch=t_batch, horizon=horizon)
    return ev, RunMetrics(ti=m.ti, mi=m.mi, tl=m.tl, al=m.al, ta=m.ta, tr=m.tr, censored=m.censored, seed=int(seed))


def replay_batch(encs, scn: Scenario, seeds, **kw) -> list[RunMetrics]:
    tr = encs if isinstance(encs, PreparedTrace) else prepare_trace(encs, kw.pop("groups", None), kw.pop("arrivals", None))
    return [replay_sim(tr, scn, s, **kw)[1] for s in seeds]


def load_trace(path, fmt: str = "auto"):
    """Read an association or encounter CSV file.

    Returns (encounters, arrivals); arrivals are first association times,
    or None for an encounter file.  ``fmt`` is "assoc", "enc" or "auto"
    (decided by the header, association format when there is none).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if fmt == "auto":
        head = data.split(b"\n", 1)[0].strip().lower()
        fmt = "enc" if head.startswith(b"t_start") else "assoc"
    if fmt == "enc":
        encs, rejects = parse_encounters(data)
        arrivals = None
    elif fmt == "assoc":
        recs, rejects = parse_associations(data)
        encs = derive_encounters(recs)
        arrivals = first_seen(recs)
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    for r in rejects[:20]:
        log.warning("%s line %d rejected: %s", path, r.line_no, r.reason)
    return encs, arrivals


# output tables

def stats_tables(stats: TraceStats, est: GroupEstimate | None = None) -> dict[str, str]:
    """CSV text for the per-node, batch, rate-matrix and histogram tables."""
    out = {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node", "total", "unique", "rate", "arrival", "group"])
    for n in stats.nodes:
        g = "" if est is None else est.group_of.get(n, "")
        w.writerow([n, stats.total[n], stats.unique[n], repr(float(stats.rate[n])), repr(float(stats.arrival[n])), g])
    out["nodes.csv"] = buf.getvalue()

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["batch", "start", "size"])
    for k, (t, m) in enumerate(stats.clusters):
        w.writerow([k, repr(float(t)), len(m)])
    out["batches.csv"] = buf.getvalue()

    if est is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group_n", "group_m", "size_n", "size_m", "encounters", "beta"])
        G = len(est.sizes)
        for n in range(G):
            for m in range(G):
                w.writerow([n, m, est.sizes[n], est.sizes[m], int(est.counts[n, m]), repr(float(est.beta[n, m]))])
        out["rates.csv"] = buf.getvalue()

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["measure", "bin_lo", "bin_hi", "count"])
    for label, vals in (("total", [stats.total[n] for n in stats.nodes]),
                        ("unique", [stats.unique[n] for n in stats.nodes])):
        hist, edges = np.histogram(vals, bins=min(20, max(1, len(set(vals)))))
        for c, lo, hi in zip(hist, edges[:-1], edges[1:]):
            w.writerow([label, repr(float(lo)), repr(float(hi)), int(c)])
    out["histogram.csv"] = buf.getvalue()

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["top_percent", "share"])
    for k, s in enumerate(stats.top_share):
        w.writerow([k, repr(float(s))])
    out["top_share.csv"] = buf.getvalue()
    return out
