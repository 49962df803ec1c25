"""Numba kernels for the encounter-level simulator.

Nodes live in pools keyed by (compartment, group, on-state) so the next
event can be drawn from aggregate pair rates in O(g^2) while individual node
ids are still tracked for the event log.  Pair encounters that cannot change
anything are thinned away; the remaining effective rates are exactly the
per-pair Poisson rates summed over the pairs that matter.

Node columns in ``nd``: comp, group, on, immune, pool, slot, away_comp.
"""

import math

import numba
import numpy as np

S_STAR, S_PRIME, PREY, PRED, REMOVED, NONCOOP, NOTYET, AWAY = 0, 1, 2, 3, 4, 5, 6, 7

K_PREY_INFECT, K_VACCINATE, K_TERMINATE, K_ARRIVE, K_TOGGLE = 0, 1, 2, 3, 4
K_INJECT, K_REMOVE, K_RESUS, K_DEPART, K_MIGRATE, K_ARRIVE_IMMUNE = 5, 6, 7, 8, 9, 10

C_COMP, C_GRP, C_ON, C_IMM, C_POOL, C_SLOT, C_AWAY = 0, 1, 2, 3, 4, 5, 6


@numba.njit(cache=True)
def _pool_of(comp, grp, on, G):
    return (comp * G + grp) * 2 + on


@numba.njit(cache=True)
def _away_pool(comp, grp, G):
    return 10 * G + comp * G + grp


@numba.njit(cache=True)
def _padd(pool, cnt, nd, node, k):
    pool[k, cnt[k]] = node
    nd[node, C_POOL] = k
    nd[node, C_SLOT] = cnt[k]
    cnt[k] += 1


@numba.njit(cache=True)
def _prem(pool, cnt, nd, node):
    k = nd[node, C_POOL]
    if k < 0:
        return
    i = nd[node, C_SLOT]
    last = pool[k, cnt[k] - 1]
    pool[k, i] = last
    nd[last, C_SLOT] = i
    cnt[k] -= 1
    nd[node, C_POOL] = -1


@numba.njit(cache=True)
def _pick(pool, cnt, k):
    return pool[k, int(np.random.random() * cnt[k])]


@numba.njit(cache=True)
def _pick_any(pool, cnt, k_off):
    """Uniform member of the union of an off pool and the on pool after it."""
    c0 = cnt[k_off]
    r = int(np.random.random() * (c0 + cnt[k_off + 1]))
    if r < c0:
        return pool[k_off, r]
    return pool[k_off + 1, r - c0]


@numba.njit(cache=True)
def _move(node, new, t, G, pool, cnt, nd, pstart, ic, acc):
    """Change a node's compartment, keeping pools and metric counters in step.

    ic = [n_prey, n_exposed, mi, ti (distinct nodes)]; acc = [tl, prey_zero_at, exposed_zero_at]
    """
    old = nd[node, C_COMP]
    _prem(pool, cnt, nd, node)
    if old == PREY:
        acc[0] += t - pstart[node]
        ic[0] -= 1
        if ic[0] == 0:
            acc[1] = t
    if old == S_STAR or old == S_PRIME or old == PREY:
        ic[1] -= 1
        if ic[1] == 0:
            acc[2] = t
    grp = nd[node, C_GRP]
    if new == AWAY:
        nd[node, C_AWAY] = old
        _padd(pool, cnt, nd, node, _away_pool(old, grp, G))
    elif new <= REMOVED:
        _padd(pool, cnt, nd, node, _pool_of(new, grp, nd[node, C_ON], G))
    nd[node, C_COMP] = new
    if new == PREY:
        if pstart[node] < 0.0:
            ic[3] += 1
        pstart[node] = t
        ic[0] += 1
        if ic[0] > ic[2]:
            ic[2] = ic[0]
    if new == S_STAR or new == S_PRIME or new == PREY:
        ic[1] += 1


@numba.njit(cache=True)
def _log(L, n, t, kind, a, b):
    if n >= L.shape[0]:
        L2 = np.empty((L.shape[0] * 2, 4))
        L2[:n] = L[:n]
        L = L2
    L[n, 0] = t
    L[n, 1] = kind
    L[n, 2] = a
    L[n, 3] = b
    return L


@numba.njit(cache=True)
def _draw_on(p):
    if p >= 1.0:
        return 1
    if p <= 0.0:
        return 0
    return 1 if np.random.random() < p else 0


@numba.njit(cache=True)
def _rates(G, cnt, beta, ks_a, ks_b, ksp_b, ka_b, alpha, gamma, gamma_s, lam, rates):
    """Fill ``rates``; returns (total, potential) where potential pretends every node is on."""
    total = 0.0
    potential = 0.0
    GG = G * G
    for n in range(G):
        s_on = cnt[_pool_of(S_STAR, n, 1, G)]
        s_all = s_on + cnt[_pool_of(S_STAR, n, 0, G)]
        sp_on = cnt[_pool_of(S_PRIME, n, 1, G)]
        sp_all = sp_on + cnt[_pool_of(S_PRIME, n, 0, G)]
        a_on = cnt[_pool_of(PREY, n, 1, G)]
        a_all = a_on + cnt[_pool_of(PREY, n, 0, G)]
        for m in range(G):
            b = beta[n, m]
            a_m = cnt[_pool_of(PREY, m, 0, G)] + cnt[_pool_of(PREY, m, 1, G)]
            b_m = cnt[_pool_of(PRED, m, 0, G)] + cnt[_pool_of(PRED, m, 1, G)]
            r0 = b * ks_a[n] * s_on * a_m
            r1 = b * ks_b[n] * s_on * b_m
            r2 = b * ksp_b[n] * sp_on * b_m
            r3 = b * ka_b[n] * a_on * b_m
            rates[n * G + m] = r0
            rates[GG + n * G + m] = r1
            rates[2 * GG + n * G + m] = r2
            rates[3 * GG + n * G + m] = r3
            total += r0 + r1 + r2 + r3
            potential += b * (ks_a[n] * s_all * a_m + ks_b[n] * s_all * b_m
                              + ksp_b[n] * sp_all * b_m + ka_b[n] * a_all * b_m)
    base1 = 4 * GG
    base2 = base1 + 4 * G
    base3 = base2 + 2 * G
    for c in range(4):
        for n in range(G):
            x = cnt[_pool_of(c, n, 0, G)] + cnt[_pool_of(c, n, 1, G)]
            r = (gamma_s if c < 2 else gamma) * x
            rates[base1 + c * G + n] = r
            total += r
            if c >= 2:
                r = alpha * x
                rates[base2 + (c - 2) * G + n] = r
                total += r
            for m in range(G):
                r = lam[c, n, m] * x if m != n else 0.0
                rates[base3 + (c * G + n) * G + m] = r
                total += r
    return total, potential + _spont(rates, base1, rates.shape[0])


@numba.njit(cache=True)
def _spont(rates, lo, hi):
    s = 0.0
    for k in range(lo, hi):
        s += rates[k]
    return s


@numba.njit(cache=True)
def run_kernel(node_comp0, node_grp, node_imm, G, beta, ks_a, ks_b, ksp_b, ka_b, p, interval,
               alpha, gamma, gamma_s, lam, prey_init, inj, sched_t, sched_kind, sched_delta,
               fresh_ids, fresh_off, horizon, t_batch, seed, do_log):
    """One stochastic run.  Returns (metrics[6], log[n,4]).

    metrics = [ti, mi, tl, ta, tr, prey_open]; ta/tr are NaN when not reached.
    """
    np.random.seed(seed)
    N = node_comp0.shape[0]
    n_pools = 10 * G + 4 * G
    pool = np.empty((n_pools, max(N, 1)), np.int64)
    cnt = np.zeros(n_pools, np.int64)
    nd = np.full((N, 7), -1, np.int64)
    pstart = np.full(N, -1.0)  # -1 until a node's first prey infection
    ic = np.zeros(4, np.int64)
    acc = np.zeros(3)
    rates = np.zeros(8 * G * G + 6 * G)
    L = np.empty((256 if do_log else 1, 4))
    nl = 0
    t = 0.0

    for v in range(N):
        nd[v, C_GRP] = node_grp[v]
        nd[v, C_IMM] = node_imm[v]
        nd[v, C_COMP] = node_comp0[v]
        nd[v, C_ON] = 0
    for v in range(N):
        c0 = node_comp0[v]
        if c0 == S_STAR or c0 == S_PRIME:
            nd[v, C_ON] = _draw_on(p)
            nd[v, C_COMP] = NOTYET
            _move(v, c0, t, G, pool, cnt, nd, pstart, ic, acc)
            if do_log:
                L = _log(L, nl, t, K_ARRIVE_IMMUNE if c0 == S_PRIME else K_ARRIVE, v, node_grp[v])
                nl += 1
    for g in range(G):
        for j in range(prey_init[g]):
            k = _pool_of(S_STAR, g, 0, G)
            if cnt[k] + cnt[k + 1] == 0:
                break
            v = _pick_any(pool, cnt, k)
            _move(v, PREY, t, G, pool, cnt, nd, pstart, ic, acc)
            if do_log:
                L = _log(L, nl, t, K_PREY_INFECT, v, -1)
                nl += 1

    E = sched_t.shape[0]
    e = 0
    toggling = 0.0 < p < 1.0
    next_toggle = interval if toggling else np.inf
    GG = G * G
    base1 = 4 * GG
    base2 = base1 + 4 * G
    base3 = base2 + 2 * G

    while True:
        total, potential = _rates(G, cnt, beta, ks_a, ks_b, ksp_b, ka_b, alpha, gamma, gamma_s, lam, rates)
        t_sched = sched_t[e] if e < E else np.inf
        if potential <= 0.0 and e >= E:
            break
        t_next = min(t_sched, next_toggle)
        if total > 0.0:
            t_cand = t - math.log(1.0 - np.random.random()) / total
        else:
            t_cand = np.inf
        if t_next <= t_cand:
            if t_next > horizon:
                break
            t = t_next
            if t_sched <= next_toggle:
                if sched_kind[e] == 0:
                    for g in range(G):
                        for j in range(inj[g]):
                            v = -1
                            for src in (S_PRIME, S_STAR, PREY):
                                k = _pool_of(src, g, 0, G)
                                if cnt[k] + cnt[k + 1] > 0:
                                    v = _pick_any(pool, cnt, k)
                                    break
                            if v < 0:
                                break
                            _move(v, PRED, t, G, pool, cnt, nd, pstart, ic, acc)
                            if do_log:
                                L = _log(L, nl, t, K_INJECT, v, -1)
                                nl += 1
                else:
                    for c in range(4):
                        for g in range(G):
                            d = sched_delta[e, c, g]
                            if d < 0:
                                for j in range(-d):
                                    k = _pool_of(c, g, 0, G)
                                    if cnt[k] + cnt[k + 1] == 0:
                                        break
                                    v = _pick_any(pool, cnt, k)
                                    _move(v, AWAY, t, G, pool, cnt, nd, pstart, ic, acc)
                                    if do_log:
                                        L = _log(L, nl, t, K_DEPART, v, -1)
                                        nl += 1
                            elif d > 0:
                                used = 0
                                ka = _away_pool(c, g, G)
                                for j in range(d):
                                    if cnt[ka] > 0:
                                        v = _pick(pool, cnt, ka)
                                        nd[v, C_ON] = _draw_on(p)
                                        _move(v, c, t, G, pool, cnt, nd, pstart, ic, acc)
                                        if do_log:
                                            L = _log(L, nl, t, K_ARRIVE, v, g)
                                            nl += 1
                                        continue
                                    v = fresh_ids[fresh_off[e, c, g] + used]
                                    used += 1
                                    nd[v, C_ON] = _draw_on(p)
                                    nd[v, C_IMM] = 1 if c == S_PRIME else 0
                                    first = S_PRIME if c == S_PRIME else S_STAR
                                    _move(v, first, t, G, pool, cnt, nd, pstart, ic, acc)
                                    if do_log:
                                        L = _log(L, nl, t, K_ARRIVE_IMMUNE if c == S_PRIME else K_ARRIVE, v, g)
                                        nl += 1
                                    if c == PREY:
                                        _move(v, PREY, t, G, pool, cnt, nd, pstart, ic, acc)
                                        if do_log:
                                            L = _log(L, nl, t, K_PREY_INFECT, v, -1)
                                            nl += 1
                                    elif c == PRED:
                                        _move(v, PRED, t, G, pool, cnt, nd, pstart, ic, acc)
                                        if do_log:
                                            L = _log(L, nl, t, K_INJECT, v, -1)
                                            nl += 1
                e += 1
            else:
                for v in range(N):
                    c = nd[v, C_COMP]
                    if c > REMOVED:
                        continue
                    on = 1 if np.random.random() < p else 0
                    if on != nd[v, C_ON]:
                        _prem(pool, cnt, nd, v)
                        nd[v, C_ON] = on
                        _padd(pool, cnt, nd, v, _pool_of(c, nd[v, C_GRP], on, G))
                        if do_log:
                            L = _log(L, nl, t, K_TOGGLE, v, on)
                            nl += 1
                next_toggle += interval
            continue
        if t_cand > horizon:
            break
        t = t_cand

        u = np.random.random() * total
        idx = 0
        run = rates[0]
        last = rates.shape[0] - 1
        while run <= u and idx < last:
            idx += 1
            run += rates[idx]
        while rates[idx] <= 0.0:
            idx -= 1

        if idx < base1:
            tau = idx // GG
            n = (idx % GG) // G
            m = idx % G
            if tau == 0:
                v = _pick(pool, cnt, _pool_of(S_STAR, n, 1, G))
                src = _pick_any(pool, cnt, _pool_of(PREY, m, 0, G))
                _move(v, PREY, t, G, pool, cnt, nd, pstart, ic, acc)
                kind = K_PREY_INFECT
            else:
                src = _pick_any(pool, cnt, _pool_of(PRED, m, 0, G))
                if tau == 1:
                    v = _pick(pool, cnt, _pool_of(S_STAR, n, 1, G))
                    kind = K_VACCINATE
                elif tau == 2:
                    v = _pick(pool, cnt, _pool_of(S_PRIME, n, 1, G))
                    kind = K_VACCINATE
                else:
                    v = _pick(pool, cnt, _pool_of(PREY, n, 1, G))
                    kind = K_TERMINATE
                _move(v, PRED, t, G, pool, cnt, nd, pstart, ic, acc)
            if do_log:
                L = _log(L, nl, t, kind, v, src)
                nl += 1
        elif idx < base2:
            c = (idx - base1) // G
            n = (idx - base1) % G
            v = _pick_any(pool, cnt, _pool_of(c, n, 0, G))
            _move(v, REMOVED, t, G, pool, cnt, nd, pstart, ic, acc)
            if do_log:
                L = _log(L, nl, t, K_REMOVE, v, -1)
                nl += 1
        elif idx < base3:
            c = 2 + (idx - base2) // G
            n = (idx - base2) % G
            v = _pick_any(pool, cnt, _pool_of(c, n, 0, G))
            back = S_PRIME if nd[v, C_IMM] == 1 else S_STAR
            _move(v, back, t, G, pool, cnt, nd, pstart, ic, acc)
            if do_log:
                L = _log(L, nl, t, K_RESUS, v, -1)
                nl += 1
        else:
            j = idx - base3
            c = j // GG
            n = (j % GG) // G
            m = j % G
            v = _pick_any(pool, cnt, _pool_of(c, n, 0, G))
            _prem(pool, cnt, nd, v)
            nd[v, C_GRP] = m
            _padd(pool, cnt, nd, v, _pool_of(c, m, nd[v, C_ON], G))
            if do_log:
                L = _log(L, nl, t, K_MIGRATE, v, m)
                nl += 1

    out = np.empty(6)
    tl = acc[0]
    for v in range(N):
        if nd[v, C_COMP] == PREY:
            tl += horizon - pstart[v]
    out[0] = ic[3]
    out[1] = ic[2]
    out[2] = tl
    out[3] = max(acc[2], t_batch) if ic[1] == 0 else np.nan
    out[4] = max(acc[1], t_batch) if ic[0] == 0 else np.nan
    out[5] = 1.0 if ic[0] > 0 else 0.0
    return out, L[:nl]


@numba.njit(cache=True)
def batch_kernel(seeds, node_comp0, node_grp, node_imm, G, beta, ks_a, ks_b, ksp_b, ka_b, p, interval,
                 alpha, gamma, gamma_s, lam, prey_init, inj, sched_t, sched_kind, sched_delta,
                 fresh_ids, fresh_off, horizon, t_batch):
    out = np.empty((seeds.shape[0], 6))
    for r in range(seeds.shape[0]):
        m, _ = run_kernel(node_comp0, node_grp, node_imm, G, beta, ks_a, ks_b, ksp_b, ka_b, p, interval,
                          alpha, gamma, gamma_s, lam, prey_init, inj, sched_t, sched_kind, sched_delta,
                          fresh_ids, fresh_off, horizon, t_batch, seeds[r], False)
        out[r] = m
    return out
