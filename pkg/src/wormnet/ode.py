"""Deterministic multi-group predator/prey model.

State layout of the flat vector used internally (g groups)::

    [S*_0..S*_{g-1}, S'_0.., I_A0.., I_B0.., R, cum_new_prey, cum_prey_time]

The last two entries are quadratures carried along with the state so TI and
TL come out of the same RK4 steps as the populations.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .metrics import Metrics, finish_metrics
from .model import (
    NEGATIVE_TOL,
    ModelError,
    Scenario,
    StateVector,
    TransitionIndicators,
    check_scenario,
    draw_predator_hosts,
    init_state,
)


class StepTooLarge(ModelError):
    pass


class UnsortedEvents(ModelError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class OdeSettings:
    step: float = 1.0
    output_stride: int = 1
    extinction_threshold: float = 0.5

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.output_stride < 1:
            raise ValueError("output_stride must be >= 1")
        if self.extinction_threshold <= 0:
            raise ValueError("extinction_threshold must be positive")


@numba.njit(cache=True)
def _deriv(y, g, beta, p, ks_a, ks_b, ksp_b, ka_b, alpha, gamma, gamma_s, imm, lam, out):
    ss = y[0:g]
    sp = y[g:2 * g]
    ia = y[2 * g:3 * g]
    ib = y[3 * g:4 * g]
    new_prey = 0.0
    prey_sum = 0.0
    s_sum = 0.0
    i_sum = 0.0
    for n in range(g):
        fa = 0.0
        fb = 0.0
        for m in range(g):
            fa += beta[n, m] * ia[m]
            fb += beta[n, m] * ib[m]
        infect = p * ks_a[n] * ss[n] * fa
        vac_s = p * ks_b[n] * ss[n] * fb
        vac_sp = p * ksp_b[n] * sp[n] * fb
        term = p * ka_b[n] * ia[n] * fb

        d_ss = -infect - vac_s - gamma_s * ss[n] + alpha * (ia[n] + (1.0 - imm) * ib[n])
        d_sp = -vac_sp - gamma_s * sp[n] + alpha * imm * ib[n]
        d_ia = infect - term - (alpha + gamma) * ia[n]
        d_ib = vac_s + vac_sp + term - (alpha + gamma) * ib[n]

        # group transitions: lam[c, n, m] moves compartment c from n to m
        for m in range(g):
            d_ss += lam[0, m, n] * ss[m] - lam[0, n, m] * ss[n]
            d_sp += lam[1, m, n] * sp[m] - lam[1, n, m] * sp[n]
            d_ia += lam[2, m, n] * ia[m] - lam[2, n, m] * ia[n]
            d_ib += lam[3, m, n] * ib[m] - lam[3, n, m] * ib[n]

        out[n] = d_ss
        out[g + n] = d_sp
        out[2 * g + n] = d_ia
        out[3 * g + n] = d_ib
        new_prey += infect
        prey_sum += ia[n]
        s_sum += ss[n] + sp[n]
        i_sum += ia[n] + ib[n]
    out[4 * g] = gamma_s * s_sum + gamma * i_sum
    out[4 * g + 1] = new_prey
    out[4 * g + 2] = prey_sum


@numba.njit(cache=True)
def _rk4_segment(y0, t0, h, n_steps, stride, g, beta, p, ks_a, ks_b, ksp_b, ka_b,
                 alpha, gamma, gamma_s, imm, lam):
    """Integrate n_steps of size h; returns (times, states, bad_step).

    Samples are taken every ``stride`` steps and always after the last step.
    ``bad_step`` is -1 unless a compartment undershot past the tolerance.
    """
    dim = y0.shape[0]
    n_out = n_steps // stride
    if n_steps % stride != 0:
        n_out += 1
    ts = np.empty(n_out)
    ys = np.empty((n_out, dim))
    y = y0.copy()
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    tmp = np.empty(dim)
    n_pop = 4 * g + 1
    j = 0
    for s in range(n_steps):
        _deriv(y, g, beta, p, ks_a, ks_b, ksp_b, ka_b, alpha, gamma, gamma_s, imm, lam, k1)
        for q in range(dim):
            tmp[q] = y[q] + 0.5 * h * k1[q]
        _deriv(tmp, g, beta, p, ks_a, ks_b, ksp_b, ka_b, alpha, gamma, gamma_s, imm, lam, k2)
        for q in range(dim):
            tmp[q] = y[q] + 0.5 * h * k2[q]
        _deriv(tmp, g, beta, p, ks_a, ks_b, ksp_b, ka_b, alpha, gamma, gamma_s, imm, lam, k3)
        for q in range(dim):
            tmp[q] = y[q] + h * k3[q]
        _deriv(tmp, g, beta, p, ks_a, ks_b, ksp_b, ka_b, alpha, gamma, gamma_s, imm, lam, k4)
        for q in range(dim):
            y[q] += h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q])
        for q in range(n_pop):
            if y[q] < 0.0:
                if y[q] < -1e-9:
                    return ts[:j], ys[:j], s
                y[q] = 0.0
        if (s + 1) % stride == 0 or s == n_steps - 1:
            ts[j] = t0 + (s + 1) * h
            ys[j] = y
            j += 1
    return ts[:j], ys[:j], -1


def _params(scn: Scenario, flags: TransitionIndicators | None = None):
    flags = flags if flags is not None else scn.flags()
    k = flags.per_group(scn.n_groups)
    return (
        scn.n_groups, scn.beta_matrix(), float(scn.on_prob), k["s_a"], k["s_b"], k["sp_b"], k["a_b"],
        float(scn.effective_alpha()), float(scn.manual_removal_rate), float(scn.manual_vaccination_rate),
        float(scn.immunization), scn.transition_tensor(),
    )


def rhs(state: StateVector, scn: Scenario, flags: TransitionIndicators | None = None, t: float = 0.0) -> StateVector:
    """Instantaneous derivative of every compartment (no batch jumps)."""
    params = _params(scn, flags)
    y = np.concatenate([state.to_array(), [0.0, 0.0]])
    out = np.zeros_like(y)
    _deriv(y, *params, out)
    return StateVector.from_array(out[:-2], scn.n_groups, t)


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray              # (samples, 4g+1) populations incl. R
    cum_new_prey: np.ndarray   # integral of the prey infection flux
    cum_prey_time: np.ndarray  # integral of total prey population
    n_groups: int
    initial_prey: float
    t_batch: float
    markers: list = field(default_factory=list)  # (t, label)

    def __len__(self) -> int:
        return len(self.t)

    def state(self, k: int) -> StateVector:
        return StateVector.from_array(self.y[k], self.n_groups, float(self.t[k]))

    def compartment(self, name: str) -> np.ndarray:
        g = self.n_groups
        idx = {"s_star": 0, "s_prime": 1, "i_a": 2, "i_b": 3}[name]
        return self.y[:, idx * g:(idx + 1) * g]

    def prey_total(self) -> np.ndarray:
        return self.compartment("i_a").sum(axis=1)

    def totals(self) -> np.ndarray:
        return self.y.sum(axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "group", "s_star", "s_prime", "i_a", "i_b", "r"])
        g = self.n_groups
        for k in range(len(self.t)):
            row = self.y[k]
            for n in range(g):
                r = row[4 * g] if n == 0 else 0.0
                w.writerow([repr(float(self.t[k])), n, repr(float(row[n])), repr(float(row[g + n])),
                            repr(float(row[2 * g + n])), repr(float(row[3 * g + n])), repr(float(r))])
        return buf.getvalue()


def read_trajectory_csv(text: str) -> dict:
    """Parse a trajectory CSV into arrays keyed by column (one entry per row)."""
    rows = list(csv.DictReader(io.StringIO(text)))
    return {k: np.array([float(r[k]) for r in rows]) for k in ("t", "group", "s_star", "s_prime", "i_a", "i_b", "r")}


def _event_schedule(scn: Scenario):
    events = []
    prev = -math.inf
    for k, ev in enumerate(scn.batch_schedule):
        if ev.time < prev:
            raise UnsortedEvents(f"batch_schedule[{k}] at t={ev.time} precedes t={prev}")
        prev = ev.time
        if ev.time <= scn.horizon:
            events.append((ev.time, 1, k))
    if scn.delay > 0 and scn.delay <= scn.horizon and sum(scn.initial_predator) > 0:
        events.append((scn.delay, 0, -1))
    events.sort(key=lambda e: (e[0], e[1], e[2]))
    return events


def _inject_predators(y: np.ndarray, scn: Scenario) -> None:
    g = scn.n_groups
    for n, count in enumerate(scn.initial_predator):
        pools = np.array([y[g + n], y[n], y[2 * g + n]])
        taken = draw_predator_hosts(pools, count)
        y[g + n] -= taken[0]
        y[n] -= taken[1]
        y[2 * g + n] -= taken[2]
        y[3 * g + n] += taken.sum()


def _apply_batch(y: np.ndarray, scn: Scenario, k: int) -> None:
    g = scn.n_groups
    ev = scn.batch_schedule[k]
    y[:4 * g] += ev.delta_array(g).reshape(-1)
    low = np.flatnonzero(y[:4 * g] < -NEGATIVE_TOL)
    if low.size:
        raise ModelError(f"batch event at t={ev.time} drives a compartment below zero")
    np.maximum(y[:4 * g], 0.0, out=y[:4 * g])


def integrate(scn: Scenario, settings: OdeSettings = OdeSettings()) -> Trajectory:
    """Fixed-step RK4 from 0 to the horizon, stopping exactly at every event.

    Events (predator injection at the delay, batch jumps) split the run into
    segments; each segment uses the largest step <= ``settings.step`` that
    divides it evenly.
    """
    check_scenario(scn)
    params = _params(scn)
    g = scn.n_groups
    y = np.concatenate([init_state(scn).to_array(), [0.0, 0.0]])
    ts = [np.array([0.0])]
    ys = [y[None, :].copy()]
    markers = []
    t = 0.0

    def run_to(t_end):
        nonlocal y, t
        span = t_end - t
        if span <= 0:
            return
        n = max(1, math.ceil(span / settings.step - 1e-9))
        seg_t, seg_y, bad = _rk4_segment(y, t, span / n, n, settings.output_stride, *params)
        if bad >= 0:
            raise StepTooLarge(
                f"compartment below {-NEGATIVE_TOL:g} near t={t + bad * span / n:g}; reduce the step")
        seg_t[-1] = t_end
        ts.append(seg_t)
        ys.append(seg_y)
        y = seg_y[-1].copy()
        t = t_end

    for t_ev, kind, k in _event_schedule(scn):
        run_to(t_ev)
        if kind == 0:
            _inject_predators(y, scn)
            markers.append((t_ev, "inject"))
        else:
            _apply_batch(y, scn, k)
            markers.append((t_ev, f"batch[{k}]"))
        # the post-jump state replaces the sample at the event time
        ts[-1] = ts[-1].copy()
        ys[-1] = ys[-1].copy()
        ts[-1][-1] = t_ev
        ys[-1][-1] = y
    run_to(scn.horizon)

    all_t = np.concatenate(ts)
    all_y = np.concatenate(ys)
    return Trajectory(
        t=all_t, y=all_y[:, :4 * g + 1], cum_new_prey=all_y[:, 4 * g + 1], cum_prey_time=all_y[:, 4 * g + 2],
        n_groups=g, initial_prey=float(sum(scn.initial_prey)), t_batch=scn.last_arrival_time(), markers=markers,
    )


def _extinction_time(t: np.ndarray, x: np.ndarray, eps: float, t_batch: float):
    """Time after which ``x`` stays below ``eps`` (None if it never does)."""
    above = np.flatnonzero(x >= eps)
    if above.size == 0:
        return max(float(t[0]), t_batch)
    k = above[-1]
    if k == len(t) - 1:
        return None
    x0, x1 = x[k], x[k + 1]
    frac = (x0 - eps) / (x0 - x1) if x0 != x1 else 1.0
    cross = t[k] + frac * (t[k + 1] - t[k])
    return max(float(cross), t_batch)


def trajectory_metrics(traj: Trajectory, scn: Scenario, settings: OdeSettings = OdeSettings()) -> Metrics:
    eps = settings.extinction_threshold
    g = traj.n_groups
    prey = traj.prey_total()
    ti = traj.initial_prey + float(traj.cum_new_prey[-1])
    mi = float(prey.max())
    tl = float(traj.cum_prey_time[-1])
    tr = _extinction_time(traj.t, prey, eps, traj.t_batch)
    exposed = traj.y[:, :3 * g].sum(axis=1)
    ta = _extinction_time(traj.t, exposed, eps, traj.t_batch)
    if ta is not None and tr is not None:
        ta = max(ta, tr)
    return finish_metrics(ti, mi, tl, ta, tr, prey_open=tr is None)


def suppression_condition(scn: Scenario) -> list[bool]:
    """Per group: does the prey population start out non-growing?

    True when S*_n(0) * sum_m beta_nm I_Am(0) <= I_An(0) * sum_m beta_nm I_Bm(0).
    """
    st = init_state(scn)
    beta = scn.beta_matrix()
    lhs = st.s_star * (beta @ st.i_a)
    rhs_ = st.i_a * (beta @ st.i_b)
    return [bool(a <= b) for a, b in zip(lhs, rhs_)]


def broadcast_time_estimate(n: int, beta: float) -> float:
    """Mean time for a message from one node to reach all n nodes."""
    if n < 2 or beta <= 0:
        raise DomainError("need n >= 2 and beta > 0")
    return (2.0 * math.log(n) + 0.5772) / (n * beta)
