"""Stochastic encounter-level simulation and Monte Carlo aggregation.

Every unordered node pair meets as a Poisson process with the rate of its
group pair.  A meeting changes state only when the receiving node is on and
cooperative; the sender's on-state does not matter.  Individual nodes are
tracked, so runs produce a full event log.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import _simkernel as K
from .events import EventLog
from .metrics import MetricsSummary, RunMetrics, finish_metrics, metrics_from_log, summarize
from .model import ModelError, Scenario, as_int_counts, check_scenario

_SEED_MOD = 2 ** 32


def node_layout(scn: Scenario):
    """Deterministic node roster: per group, immune nodes, then S*, then non-cooperative.

    The S* pool is floor(c (1 - i) N) so relative prey counts never exceed 1.
    """
    comp, grp, imm = [], [], []
    for g, gp in enumerate(scn.groups):
        n_imm = int(round(scn.cooperation * scn.immunization * gp.n_nodes))
        n_star = int(math.floor(scn.cooperation * (1 - scn.immunization) * gp.n_nodes + 1e-9))
        n_coop = min(gp.n_nodes, n_imm + n_star)
        for k in range(gp.n_nodes):
            if k < n_imm:
                comp.append(K.S_PRIME)
                imm.append(1)
            elif k < n_coop:
                comp.append(K.S_STAR)
                imm.append(0)
            else:
                comp.append(K.NONCOOP)
                imm.append(0)
            grp.append(g)
    return comp, grp, imm


def kernel_inputs(scn: Scenario) -> dict:
    """Everything ``run_kernel`` needs, as numpy arrays."""
    check_scenario(scn)
    G = scn.n_groups
    comp, grp, imm = node_layout(scn)
    prey = as_int_counts(scn.initial_prey, "initial_prey")
    pred = as_int_counts(scn.initial_predator, "initial_predator")
    for g in range(G):
        n_star = sum(1 for c, gg in zip(comp, grp) if gg == g and c == K.S_STAR)
        if prey[g] > n_star:
            raise ModelError(f"initial_prey[{g}]={prey[g]} exceeds the {n_star} susceptible nodes")

    events = []
    for k, ev in enumerate(scn.batch_schedule):
        if ev.time <= scn.horizon:
            events.append((ev.time, 1, k))
    if sum(pred) > 0 and scn.delay <= scn.horizon:
        events.append((scn.delay, 0, -1))
    events.sort()

    E = len(events)
    sched_t = np.array([e[0] for e in events], float)
    sched_kind = np.array([e[1] for e in events], np.int64)
    sched_delta = np.zeros((E, 4, G), np.int64)
    fresh_off = np.zeros((E, 4, G), np.int64)
    fresh = []
    next_id = len(comp)
    for j, (_, kind, k) in enumerate(events):
        if kind != 1:
            continue
        ev = scn.batch_schedule[k]
        for c, row in enumerate(ev.delta_array(G)):
            for g, d in enumerate(as_int_counts(row, "batch delta")):
                sched_delta[j, c, g] = d
                fresh_off[j, c, g] = len(fresh)
                for _ in range(max(d, 0)):
                    fresh.append(next_id)
                    comp.append(K.NOTYET)
                    grp.append(g)
                    imm.append(0)
                    next_id += 1

    k = scn.flags().per_group(G)
    return dict(
        node_comp0=np.array(comp, np.int64), node_grp=np.array(grp, np.int64), node_imm=np.array(imm, np.int64),
        G=G, beta=scn.beta_matrix(), ks_a=k["s_a"], ks_b=k["s_b"], ksp_b=k["sp_b"], ka_b=k["a_b"],
        p=float(scn.on_prob), interval=float(scn.on_off_interval), alpha=float(scn.effective_alpha()),
        gamma=float(scn.manual_removal_rate), gamma_s=float(scn.manual_vaccination_rate),
        lam=scn.transition_tensor(), prey_init=np.array(prey, np.int64), inj=np.array(pred, np.int64),
        sched_t=sched_t, sched_kind=sched_kind, sched_delta=sched_delta,
        fresh_ids=np.array(fresh, np.int64), fresh_off=fresh_off,
        horizon=float(scn.horizon), t_batch=float(scn.last_arrival_time()),
    )


def _to_run_metrics(row, seed) -> RunMetrics:
    ta = None if math.isnan(row[3]) else float(row[3])
    tr = None if math.isnan(row[4]) else float(row[4])
    return finish_metrics(row[0], row[1], row[2], ta, tr, bool(row[5]), cls=RunMetrics, seed=int(seed))


def simulate_run(scn: Scenario, seed: int) -> tuple[EventLog, RunMetrics]:
    """One seeded run; metrics are recomputed from the event log."""
    inp = kernel_inputs(scn)
    _, L = K.run_kernel(*inp.values(), int(seed) % _SEED_MOD, True)
    log = EventLog(L[:, 0].copy(), L[:, 1].astype(np.int8), L[:, 2].astype(np.int64), L[:, 3].astype(np.int64))
    m = metrics_from_log(log, scn)
    return log, RunMetrics(**{f.name: getattr(m, f.name) for f in dataclasses.fields(m)}, seed=int(seed))


def _batch(inp: dict, seeds: np.ndarray) -> np.ndarray:
    return K.batch_kernel(seeds % _SEED_MOD, *inp.values())


def batch_array(scn: Scenario, seeds, workers: int = 1) -> np.ndarray:
    """Raw per-seed rows [ti, mi, tl, ta, tr, prey_open]; ta/tr are NaN when not reached.

    Skips building RunMetrics objects, which dominates for tiny networks.
    """
    seeds = np.asarray(list(seeds), np.int64)
    inp = kernel_inputs(scn)
    if workers <= 1 or len(seeds) < 2 * workers:
        return _batch(inp, seeds)
    chunks = np.array_split(seeds, workers)
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return np.concatenate(list(ex.map(_batch, [inp] * len(chunks), chunks)))


def run_batch(scn: Scenario, seeds, workers: int = 1) -> list[RunMetrics]:
    """Metrics for each seed, in seed order whatever the worker count."""
    seeds = np.asarray(list(seeds), np.int64)
    rows = batch_array(scn, seeds, workers)
    return [_to_run_metrics(r, s) for r, s in zip(rows, seeds)]


def monte_carlo(scn: Scenario, runs: int, base_seed: int = 0, workers: int = 1) -> MetricsSummary:
    """Median/quartile summary over seeds base_seed .. base_seed + runs - 1."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    return summarize(run_batch(scn, range(base_seed, base_seed + runs), workers), scn)


def prey_timeline(log: EventLog, times) -> np.ndarray:
    """Number of prey-infected nodes in the network at each of ``times``."""
    from .metrics import _A, _AWAY, _B, _R, _S, _SP
    from .events import EventKind as E

    times = np.asarray(times, float)
    out = np.zeros(len(times))
    comp, away = {}, {}
    n_prey = 0
    j = 0
    for t, kind, a, b in log:
        while j < len(times) and times[j] < t:
            out[j] = n_prey
            j += 1
        old = comp.get(a)
        if kind == E.PREY_INFECT:
            new = _A
        elif kind in (E.VACCINATE, E.TERMINATE, E.INJECT):
            new = _B
        elif kind == E.REMOVE:
            new = _R
        elif kind == E.RESUSCEPTIBLE:
            new = _S
        elif kind == E.DEPART:
            away[a] = old
            new = _AWAY
        elif kind == E.ARRIVE:
            new = away.pop(a, _S) if old == _AWAY else _S
        elif kind == E.ARRIVE_IMMUNE:
            new = _SP
        else:
            continue
        n_prey += (new == _A) - (old == _A)
        comp[a] = new
    out[j:] = n_prey
    return out


def poisson_encounters(sizes, beta, t_end, starts=None, weights=None, seed=0):
    """Sample pairwise Poisson encounters for a grouped population.

    ``sizes`` are group sizes (nodes are numbered group by group), ``beta``
    the group-pair rate matrix and ``starts`` the time each group joins.
    Optional per-node ``weights`` skew activity while keeping each group
    pair's mean rate at ``beta``.  Returns (t_start, node_a, node_b) arrays
    sorted by time, node_a < node_b.
    """
    rng = np.random.default_rng(seed)
    sizes = [int(s) for s in sizes]
    G = len(sizes)
    beta = np.asarray(beta, float).reshape(G, G)
    starts = np.zeros(G) if starts is None else np.asarray(starts, float)
    offs = np.concatenate([[0], np.cumsum(sizes)])
    w = np.ones(offs[-1]) if weights is None else np.asarray(weights, float)
    ts, aa, bb = [], [], []
    for n in range(G):
        for m in range(n, G):
            span = t_end - max(starts[n], starts[m])
            if span <= 0 or beta[n, m] <= 0:
                continue
            u = np.arange(offs[n], offs[n + 1])
            v = np.arange(offs[m], offs[m + 1])
            if n == m:
                iu, iv = np.triu_indices(len(u), k=1)
                pu, pv = u[iu], u[iv]
            else:
                pu, pv = np.repeat(u, len(v)), np.tile(v, len(u))
            if len(pu) == 0:
                continue
            pw = w[pu] * w[pv]
            pw = pw / pw.mean()
            counts = rng.poisson(beta[n, m] * pw * span)
            t0 = max(starts[n], starts[m])
            ts.append(t0 + rng.random(counts.sum()) * span)
            aa.append(np.repeat(pu, counts))
            bb.append(np.repeat(pv, counts))
    if not ts:
        return np.zeros(0), np.zeros(0, np.int64), np.zeros(0, np.int64)
    t = np.concatenate(ts)
    a = np.concatenate(aa)
    b = np.concatenate(bb)
    order = np.lexsort((b, a, t))
    return t[order], a[order], b[order]
