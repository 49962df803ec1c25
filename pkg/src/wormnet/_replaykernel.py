"""Numba kernel replaying worm interactions over a recorded encounter list."""

import math

import numba
import numpy as np

from ._simkernel import (
    K_ARRIVE,
    K_ARRIVE_IMMUNE,
    K_INJECT,
    K_PREY_INFECT,
    K_TERMINATE,
    K_TOGGLE,
    K_VACCINATE,
    NONCOOP,
    NOTYET,
    PRED,
    PREY,
    S_PRIME,
    S_STAR,
    _log,
)


@numba.njit(cache=True)
def _pick_in_group(comp, grp, g, want):
    n = 0
    for v in range(comp.shape[0]):
        if comp[v] == want and grp[v] == g:
            n += 1
    if n == 0:
        return -1
    r = int(np.random.random() * n)
    for v in range(comp.shape[0]):
        if comp[v] == want and grp[v] == g:
            if r == 0:
                return v
            r -= 1
    return -1


@numba.njit(cache=True)
def _refresh_on(v, t, p, interval, on, slot, L, nl, do_log):
    """Lazily resample a node's on-state at the first touch in each interval."""
    k = int(math.floor(t / interval))
    if slot[v] != k:
        slot[v] = k
        new = 1 if np.random.random() < p else 0
        if new != on[v]:
            on[v] = new
            if do_log:
                L = _log(L, nl, t, K_TOGGLE, v, new)
                nl += 1
    return L, nl


@numba.njit(cache=True)
def replay_kernel(enc_t, enc_a, enc_b, arr_node, arr_t, node_grp, coop_frac, imm_frac, p, interval,
                  ks_a, ks_b, ksp_b, ka_b, inj_t, inj_kind, inj_grp, inj_node, seed):
    """Returns the event log as an (n, 4) array [t, kind, node_a, node_b].

    ``arr_node``/``arr_t`` list node arrivals sorted by time; ``inj_*``
    list seed infections sorted by time (kind 0 prey, 1 predator; node -1
    means pick at random within the group).
    """
    np.random.seed(seed)
    N = node_grp.shape[0]
    coop = np.zeros(N, np.int64)
    imm = np.zeros(N, np.int64)
    for v in range(N):
        if np.random.random() < coop_frac:
            coop[v] = 1
            if np.random.random() < imm_frac:
                imm[v] = 1
    for j in range(inj_node.shape[0]):
        if inj_node[j] >= 0:
            coop[inj_node[j]] = 1
            if inj_kind[j] == 0:
                imm[inj_node[j]] = 0
    comp = np.full(N, NOTYET, np.int64)
    on = np.ones(N, np.int64)
    slot = np.full(N, -1, np.int64)
    toggling = 0.0 < p < 1.0
    if p <= 0.0:
        on[:] = 0

    L = np.empty((256, 4))
    nl = 0
    ia = 0
    ij = 0
    n_arr = arr_t.shape[0]
    n_inj = inj_t.shape[0]
    n_enc = enc_t.shape[0]
    for e in range(n_enc + 1):
        t_enc = enc_t[e] if e < n_enc else np.inf
        while True:
            t_a = arr_t[ia] if ia < n_arr else np.inf
            t_i = inj_t[ij] if ij < n_inj else np.inf
            if t_a <= t_i and t_a <= t_enc and t_a < np.inf:
                v = arr_node[ia]
                ia += 1
                if coop[v] == 1:
                    comp[v] = S_PRIME if imm[v] == 1 else S_STAR
                    L = _log(L, nl, t_a, K_ARRIVE_IMMUNE if imm[v] == 1 else K_ARRIVE, v, node_grp[v])
                    nl += 1
                else:
                    comp[v] = NONCOOP
            elif t_i <= t_enc and t_i < np.inf:
                g = inj_grp[ij]
                v = inj_node[ij]
                if inj_kind[ij] == 0:
                    if v < 0:
                        v = _pick_in_group(comp, node_grp, g, S_STAR)
                    if v >= 0:
                        comp[v] = PREY
                        L = _log(L, nl, t_i, K_PREY_INFECT, v, -1)
                        nl += 1
                else:
                    if v < 0:
                        v = _pick_in_group(comp, node_grp, g, S_PRIME)
                        if v < 0:
                            v = _pick_in_group(comp, node_grp, g, S_STAR)
                        if v < 0:
                            v = _pick_in_group(comp, node_grp, g, PREY)
                    if v >= 0:
                        comp[v] = PRED
                        L = _log(L, nl, t_i, K_INJECT, v, -1)
                        nl += 1
                ij += 1
            else:
                break
        if e >= n_enc:
            break

        t = t_enc
        u = enc_a[e]
        w = enc_b[e]
        cu = comp[u]
        cw = comp[w]
        if cu == NONCOOP or cw == NONCOOP or cu == NOTYET or cw == NOTYET:
            continue
        if toggling:
            L, nl = _refresh_on(u, t, p, interval, on, slot, L, nl, True)
            L, nl = _refresh_on(w, t, p, interval, on, slot, L, nl, True)
        for side in range(2):
            src = u if side == 0 else w
            dst = w if side == 0 else u
            cs = comp[src]
            cd = comp[dst]
            if on[dst] == 0:
                continue
            g = node_grp[dst]
            g1 = 0 if g == 0 else 1
            kind = -1
            if cs == PREY and cd == S_STAR and ks_a[g1] > 0:
                comp[dst] = PREY
                kind = K_PREY_INFECT
            elif cs == PRED:
                if (cd == S_STAR and ks_b[g1] > 0) or (cd == S_PRIME and ksp_b[g1] > 0):
                    comp[dst] = PRED
                    kind = K_VACCINATE
                elif cd == PREY and ka_b[g1] > 0:
                    comp[dst] = PRED
                    kind = K_TERMINATE
            if kind >= 0:
                L = _log(L, nl, t, kind, dst, src)
                nl += 1
                break
    return L[:nl]
