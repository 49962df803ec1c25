"""Exact expectations for tiny single-group populations.

The compartment counts (S*, S', I_A, I_B) form a finite absorbing
continuous-time Markov chain.  Expected prey infections and expected total
prey lifespan follow from first-step analysis over the transient states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve

from .model import ModelError, Scenario, check_scenario, init_state

MAX_NODES = 8


class TooLarge(ModelError):
    pass


@dataclass(frozen=True)
class ExactMetrics:
    ti: float
    tl: float
    n_states: int


def _transitions(state, beta, fl):
    s, sp, a, b = state
    out = []
    if fl.k_s1_a and s and a:
        out.append((beta * s * a, (s - 1, sp, a + 1, b), 1))
    if fl.k_s1_b and s and b:
        out.append((beta * s * b, (s - 1, sp, a, b + 1), 0))
    if fl.k_sp1_b and sp and b:
        out.append((beta * sp * b, (s, sp - 1, a, b + 1), 0))
    if fl.k_a1_b and a and b:
        out.append((beta * a * b, (s, sp, a - 1, b + 1), 0))
    return out


def exact_small_markov(scn: Scenario) -> ExactMetrics:
    """E[TI] and E[TL] for a single uniform group (TL is inf if prey can persist)."""
    check_scenario(scn)
    if scn.n_groups != 1:
        raise ValueError("exact_small_markov handles a single group only")
    if scn.on_prob != 1 or scn.delay != 0 or scn.batch_schedule:
        raise ValueError("exact_small_markov needs p=1, d=0 and no batch events")
    if scn.manual_removal_rate or scn.manual_vaccination_rate or scn.effective_alpha():
        raise ValueError("exact_small_markov needs gamma = gamma_S = alpha = 0")
    st = init_state(scn)
    start = tuple(int(round(float(x[0]))) for x in (st.s_star, st.s_prime, st.i_a, st.i_b))
    if sum(start) > MAX_NODES:
        raise TooLarge(f"{sum(start)} nodes; the exact chain is limited to {MAX_NODES}")
    beta = scn.groups[0].intra_rate
    fl = scn.flags()

    index = {start: 0}
    order = [start]
    edges = {}
    k = 0
    while k < len(order):
        x = order[k]
        edges[x] = _transitions(x, beta, fl)
        for _, y, _ in edges[x]:
            if y not in index:
                index[y] = len(order)
                order.append(y)
        k += 1

    transient = [x for x in order if edges[x]]
    if not transient:
        return ExactMetrics(float(start[2]), math.inf if start[2] > 0 else 0.0, len(order))
    tix = {x: j for j, x in enumerate(transient)}
    n = len(transient)
    A = np.eye(n)
    b_ti = np.zeros(n)
    b_tl = np.zeros(n)
    b_stuck = np.zeros(n)
    for x in transient:
        i = tix[x]
        q = sum(r for r, _, _ in edges[x])
        b_tl[i] = x[2] / q
        for r, y, inc in edges[x]:
            prob = r / q
            b_ti[i] += prob * inc
            if y in tix:
                A[i, tix[y]] -= prob
            elif y[2] > 0:
                b_stuck[i] += prob
    v = solve(A, np.column_stack([b_ti, b_tl, b_stuck]))
    ti = start[2] + v[0, 0]
    tl = math.inf if v[0, 2] > 1e-12 else v[0, 1]
    return ExactMetrics(float(ti), float(tl), len(order))
