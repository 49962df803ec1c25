"""Scenario parameters, interaction flags and initial conditions.

Everything here is shared by the ODE engine, the encounter simulator and
the trace replay.  Compartments per group are

    s_star   susceptible to both worms (S*)
    s_prime  immune to prey, still susceptible to predator (S')
    i_a      prey-infected (I_A)
    i_b      predator-infected (I_B)

plus a single global removed count ``r``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, Sequence

import numpy as np

COMPARTMENTS = ("s_star", "s_prime", "i_a", "i_b")

# undershoot allowed before a compartment counts as negative
NEGATIVE_TOL = 1e-9


class ModelError(ValueError):
    """Base class for scenario and integration errors."""


class NegativeCompartment(ModelError):
    pass


class InteractionType(str, enum.Enum):
    AGGRESSIVE_ONE_SIDED = "aggressive_one_sided"
    CONSERVATIVE_ONE_SIDED = "conservative_one_sided"
    AGGRESSIVE_TWO_SIDED = "aggressive_two_sided"


@dataclass(frozen=True)
class TransitionIndicators:
    """Binary transition flags.

    ``k_s1_a`` enables S* -> I_A in group 1, ``k_sp2_b`` enables S' -> I_B in
    group 2, ``k_a1_b`` enables prey termination (I_A -> I_B) in group 1 and
    so on.  With more than two groups, the group-2 flags apply to every
    group after the first.
    """

    k_s1_a: int = 0
    k_s2_a: int = 0
    k_s1_b: int = 0
    k_s2_b: int = 0
    k_sp1_b: int = 0
    k_sp2_b: int = 0
    k_a1_b: int = 0
    k_a2_b: int = 0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) not in (0, 1):
                raise ModelError(f"{f.name} must be 0 or 1")

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))

    def per_group(self, g: int) -> dict[str, np.ndarray]:
        """Expand to per-group float arrays keyed ``s_a``, ``s_b``, ``sp_b``, ``a_b``."""
        out = {}
        for key, (first, rest) in {
            "s_a": (self.k_s1_a, self.k_s2_a),
            "s_b": (self.k_s1_b, self.k_s2_b),
            "sp_b": (self.k_sp1_b, self.k_sp2_b),
            "a_b": (self.k_a1_b, self.k_a2_b),
        }.items():
            arr = np.full(g, float(rest))
            arr[0] = float(first)
            out[key] = arr
        return out


_NAMED_FLAGS = {
    InteractionType.AGGRESSIVE_ONE_SIDED: TransitionIndicators(1, 1, 1, 1, 1, 1, 1, 1),
    InteractionType.CONSERVATIVE_ONE_SIDED: TransitionIndicators(1, 1, 0, 0, 0, 0, 1, 1),
    InteractionType.AGGRESSIVE_TWO_SIDED: TransitionIndicators(1, 1, 1, 1, 1, 1, 0, 0),
}


def build_interaction_flags(itype) -> tuple[TransitionIndicators, float | None]:
    """Map an interaction type to its transition flags and alpha override.

    Named types force alpha = 0.  A ``TransitionIndicators`` instance is a
    custom interaction and passes through without an override.
    """
    if isinstance(itype, TransitionIndicators):
        return itype, None
    return _NAMED_FLAGS[InteractionType(itype)], 0.0


@dataclass(frozen=True)
class GroupParams:
    n_nodes: int
    intra_rate: float


@dataclass(frozen=True)
class BatchEvent:
    """Instantaneous population jump.

    ``deltas`` maps compartment name to a signed per-group count, e.g.
    ``{"s_star": (395, 0)}`` for 395 susceptible arrivals in group 1.
    """

    time: float
    deltas: Mapping[str, tuple[float, ...]]

    def delta_array(self, g: int) -> np.ndarray:
        arr = np.zeros((4, g))
        for name, vals in self.deltas.items():
            arr[COMPARTMENTS.index(name)] = vals
        return arr

    @property
    def is_arrival(self) -> bool:
        return any(v > 0 for vals in self.deltas.values() for v in vals)


@dataclass(frozen=True)
class Scenario:
    groups: tuple[GroupParams, ...]
    inter_rates: tuple[tuple[float, ...], ...] = ()
    cooperation: float = 1.0
    immunization: float = 0.0
    on_prob: float = 1.0
    delay: float = 0.0
    resusceptible_rate: float = 0.0
    manual_removal_rate: float = 0.0
    manual_vaccination_rate: float = 0.0
    # compartment name -> g x g matrix, rate of moving from group n to m
    group_transitions: Mapping[str, tuple[tuple[float, ...], ...]] = field(default_factory=dict)
    initial_prey: tuple[float, ...] = ()
    initial_predator: tuple[float, ...] = ()
    interaction: InteractionType | TransitionIndicators = InteractionType.AGGRESSIVE_ONE_SIDED
    batch_schedule: tuple[BatchEvent, ...] = ()
    horizon: float = 1e5
    on_off_interval: float = 600.0

    def __post_init__(self):
        # normalise containers so equal scenarios compare equal
        object.__setattr__(self, "groups", tuple(self.groups))
        g = len(self.groups)
        if not self.inter_rates:
            object.__setattr__(self, "inter_rates", tuple((0.0,) * g for _ in range(g)))
        else:
            object.__setattr__(self, "inter_rates", tuple(tuple(float(x) for x in row) for row in self.inter_rates))
        for name in ("initial_prey", "initial_predator"):
            vals = getattr(self, name)
            object.__setattr__(self, name, tuple(vals) if vals else (0,) * g)
        object.__setattr__(self, "batch_schedule", tuple(self.batch_schedule))
        if not isinstance(self.interaction, TransitionIndicators):
            object.__setattr__(self, "interaction", InteractionType(self.interaction))

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def total_nodes(self) -> int:
        return sum(gp.n_nodes for gp in self.groups)

    def beta_matrix(self) -> np.ndarray:
        g = self.n_groups
        beta = np.array(self.inter_rates, dtype=float).reshape(g, g).copy()
        for n, gp in enumerate(self.groups):
            beta[n, n] = gp.intra_rate
        return beta

    def transition_tensor(self) -> np.ndarray:
        g = self.n_groups
        lam = np.zeros((4, g, g))
        for name, mat in self.group_transitions.items():
            lam[COMPARTMENTS.index(name)] = np.asarray(mat, dtype=float)
        for c in range(4):
            np.fill_diagonal(lam[c], 0.0)
        return lam

    def flags(self) -> TransitionIndicators:
        return build_interaction_flags(self.interaction)[0]

    def effective_alpha(self) -> float:
        override = build_interaction_flags(self.interaction)[1]
        return self.resusceptible_rate if override is None else override

    def last_arrival_time(self) -> float:
        """Time of the last batch arrival, 0 when there is none."""
        times = [ev.time for ev in self.batch_schedule if ev.is_arrival]
        return max(times, default=0.0)

    def with_(self, **kw) -> "Scenario":
        return replace(self, **kw)


def single_group(n: int, beta: float, prey: float = 1, predator: float = 1, **kw) -> Scenario:
    """Shorthand for the uniform one-group setup used throughout the evaluation."""
    return Scenario(groups=(GroupParams(n, beta),), initial_prey=(prey,), initial_predator=(predator,), **kw)


@dataclass(frozen=True)
class StateVector:
    s_star: np.ndarray
    s_prime: np.ndarray
    i_a: np.ndarray
    i_b: np.ndarray
    r: float = 0.0
    t: float = 0.0

    @property
    def n_groups(self) -> int:
        return len(self.s_star)

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.s_star, self.s_prime, self.i_a, self.i_b, [self.r]])

    @classmethod
    def from_array(cls, y, g: int, t: float = 0.0) -> "StateVector":
        y = np.asarray(y, dtype=float)
        return cls(y[0:g].copy(), y[g:2 * g].copy(), y[2 * g:3 * g].copy(), y[3 * g:4 * g].copy(), float(y[4 * g]), t)

    def total(self) -> float:
        return float(self.s_star.sum() + self.s_prime.sum() + self.i_a.sum() + self.i_b.sum() + self.r)


def draw_predator_hosts(pools: np.ndarray, count: float) -> np.ndarray:
    """Split ``count`` predator hosts across source pools in priority order.

    ``pools`` holds the available amount per source (S', then S*, then I_A).
    Returns the amount taken from each; whatever cannot be placed is dropped.
    """
    taken = np.zeros(len(pools))
    need = float(count)
    for k, avail in enumerate(pools):
        if need <= 0:
            break
        take = min(need, max(float(avail), 0.0))
        taken[k] = take
        need -= take
    return taken


def init_state(scn: Scenario) -> StateVector:
    """Population split at t = 0.

    Non-cooperative nodes are left out entirely.  Initial predators come out
    of the prey-immune pool first and fall back to S* when it runs dry; with
    a positive delay they are injected later by the integrator instead.
    """
    g = scn.n_groups
    n = np.array([gp.n_nodes for gp in scn.groups], dtype=float)
    c, i = scn.cooperation, scn.immunization
    prey = np.asarray(scn.initial_prey, dtype=float)
    pred = np.asarray(scn.initial_predator, dtype=float)

    s_star = c * (1 - i) * n - prey
    s_prime = c * i * n
    i_b = np.zeros(g)
    if scn.delay == 0:
        for k in range(g):
            from_sp, from_ss = draw_predator_hosts(np.array([s_prime[k], np.inf]), pred[k])
            s_prime[k] -= from_sp
            s_star[k] -= from_ss
        i_b = pred.copy()

    for name, arr in (("s_star", s_star), ("s_prime", s_prime)):
        bad = np.flatnonzero(arr < -NEGATIVE_TOL)
        if bad.size:
            raise NegativeCompartment(f"{name}[{bad[0]}] = {arr[bad[0]]:g} at t=0")
    return StateVector(np.maximum(s_star, 0.0), np.maximum(s_prime, 0.0), prey.copy(), i_b, 0.0, 0.0)


def validate_scenario(scn: Scenario) -> list[str]:
    """Check every scenario invariant; returns violation strings, never raises."""
    out: list[str] = []
    g = scn.n_groups
    if g < 1:
        return ["EmptyGroups: at least one group is required"]
    for k, gp in enumerate(scn.groups):
        if gp.n_nodes < 0:
            out.append(f"NegativeNodeCount: groups[{k}].n_nodes")
        if gp.intra_rate < 0:
            out.append(f"NegativeRate: groups[{k}].intra_rate")

    rates = np.asarray(scn.inter_rates, dtype=float)
    if rates.shape != (g, g):
        out.append(f"RateShape: inter_rates must be {g}x{g}")
    else:
        if not np.allclose(rates, rates.T, rtol=1e-12, atol=0.0):
            out.append("AsymmetricRates: inter_rates")
        if (rates < 0).any():
            out.append("NegativeRate: inter_rates")

    for name in ("cooperation", "immunization", "on_prob"):
        v = getattr(scn, name)
        if not 0.0 <= v <= 1.0:
            out.append(f"ProbabilityOutOfRange: {name}={v}")
    for name in ("delay", "resusceptible_rate", "manual_removal_rate", "manual_vaccination_rate", "horizon"):
        if getattr(scn, name) < 0:
            out.append(f"NegativeValue: {name}")
    if scn.on_off_interval <= 0:
        out.append("NonPositiveValue: on_off_interval")

    for name, mat in scn.group_transitions.items():
        if name not in COMPARTMENTS:
            out.append(f"UnknownCompartment: group_transitions.{name}")
            continue
        arr = np.asarray(mat, dtype=float)
        if arr.shape != (g, g) or (arr < 0).any():
            out.append(f"BadTransitionMatrix: group_transitions.{name}")

    for name in ("initial_prey", "initial_predator"):
        vals = getattr(scn, name)
        if len(vals) != g:
            out.append(f"LengthMismatch: {name} has {len(vals)} entries for {g} groups")
        elif any(v < 0 for v in vals):
            out.append(f"NegativeValue: {name}")

    prev = 0.0
    for k, ev in enumerate(scn.batch_schedule):
        if ev.time < 0:
            out.append(f"NegativeValue: batch_schedule[{k}].time")
        if ev.time < prev:
            out.append(f"UnsortedEvents: batch_schedule[{k}]")
        prev = ev.time
        for name, vals in ev.deltas.items():
            if name not in COMPARTMENTS:
                out.append(f"UnknownCompartment: batch_schedule[{k}].{name}")
            elif len(vals) != g:
                out.append(f"LengthMismatch: batch_schedule[{k}].{name}")

    if not out:
        try:
            init_state(scn)
        except NegativeCompartment as exc:
            out.append(f"NegativeCompartment: {exc}")
    return out


def check_scenario(scn: Scenario) -> None:
    problems = validate_scenario(scn)
    if problems:
        raise ModelError("; ".join(problems))


def proportional_initials(scn: Scenario, factor: float) -> Scenario:
    """Scale group sizes and initial infections together (fixed S:I_B:I_A)."""
    groups = tuple(GroupParams(int(round(gp.n_nodes * factor)), gp.intra_rate) for gp in scn.groups)
    return replace(
        scn,
        groups=groups,
        initial_prey=tuple(v * factor for v in scn.initial_prey),
        initial_predator=tuple(v * factor for v in scn.initial_predator),
    )


def as_int_counts(values: Sequence[float], label: str) -> list[int]:
    out = []
    for v in values:
        if abs(v - round(v)) > 1e-9:
            raise ModelError(f"{label} must be whole node counts for the stochastic engines, got {v}")
        out.append(int(round(v)))
    return out
