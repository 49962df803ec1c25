
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from wormnet.metrics import Metrics
from wormnet.model import BatchEvent, GroupParams, Scenario, StateVector, TransitionIndicators, single_group
from wormnet.ode import (
    DomainError,
    OdeSettings,
    StepTooLarge,
    broadcast_time_estimate,
    integrate,
    read_trajectory_csv,
    rhs,
    suppression_condition,
    trajectory_metrics,
)

PREY_ONLY = TransitionIndicators(k_s1_a=1)


def _sv(ss, sp, ia, ib):
    return StateVector(np.array([ss], float), np.array([sp], float), np.array([ia], float), np.array([ib], float), 0.0, 0.0)


def test_rhs_zero_when_off():
    scn = single_group(100, 1e-3, 1, 1, on_prob=0.0)
    d = rhs(_sv(50, 10, 5, 5), scn)
    assert np.allclose(d.to_array(), 0.0)


def test_rhs_logistic_form():
    scn = single_group(1000, 5e-5, 1, 0, interaction=PREY_ONLY)
    d = rhs(_sv(999, 0, 1, 0), scn)
    assert d.i_a[0] == pytest.approx(5e-5 * 999)
    assert d.s_star[0] == pytest.approx(-5e-5 * 999)


def test_rhs_hand_value():
    scn = single_group(1000, 5e-5, 1, 1)
    d = rhs(_sv(998, 0, 1, 1), scn)
    assert d.i_a[0] == pytest.approx(0.049850, abs=1e-9)


@given(
    ss=st.floats(0, 500), sp=st.floats(0, 500), ia=st.floats(0, 500), ib=st.floats(0, 500),
    alpha=st.floats(0, 1e-3), gamma=st.floats(0, 1e-3), gamma_s=st.floats(0, 1e-3), i=st.floats(0, 1),
)
def test_rhs_conserves_nodes(ss, sp, ia, ib, alpha, gamma, gamma_s, i):
    custom = TransitionIndicators(1, 1, 1, 1, 1, 1, 1, 1)
    scn = single_group(2000, 1e-4, 0, 0, interaction=custom, resusceptible_rate=alpha,
                       manual_removal_rate=gamma, manual_vaccination_rate=gamma_s, immunization=i)
    d = rhs(_sv(ss, sp, ia, ib), scn)
    assert abs(d.total()) <= 1e-9 * (1 + ss + sp + ia + ib)


def test_rhs_group_transitions_conserve():
    scn = Scenario(groups=(GroupParams(50, 1e-4), GroupParams(50, 2e-4)), inter_rates=((0, 1e-5), (1e-5, 0)),
                   group_transitions={c: ((0, 1e-3), (2e-3, 0)) for c in ("s_star", "s_prime", "i_a", "i_b")})
    st_ = StateVector(np.array([20.0, 30]), np.array([5.0, 1]), np.array([3.0, 4]), np.array([2.0, 6]), 0.0, 0.0)
    assert abs(rhs(st_, scn).total()) < 1e-12


def test_logistic_closed_form():
    n, beta = 1000, 5e-5
    scn = single_group(n, beta, 1, 0, interaction=PREY_ONLY, horizon=2000)
    traj = integrate(scn, OdeSettings(step=1.0))
    t = traj.t
    exact = n * np.exp(beta * n * t) / (n - 1 + np.exp(beta * n * t))
    rel = np.abs(traj.prey_total() - exact) / exact
    assert rel.max() < 1e-4


def test_sir_reduction_matches_solve_ivp():
    beta, gamma, n = 5e-5, 1e-4, 1000
    scn = single_group(n, beta, 1, 0, interaction=PREY_ONLY, manual_removal_rate=gamma, horizon=1e5)
    traj = integrate(scn, OdeSettings(step=1.0, output_stride=100))

    def sir(_, y):
        s, i, r = y
        return [-beta * s * i, beta * s * i - gamma * i, gamma * i]

    ref = solve_ivp(sir, (0, 1e5), [n - 1, 1, 0], t_eval=traj.t, method="DOP853", rtol=1e-12, atol=1e-12)
    ours = np.column_stack([traj.compartment("s_star")[:, 0], traj.compartment("i_a")[:, 0], traj.y[:, 4]])
    err = np.abs(ours - ref.y.T).max(axis=0) / np.abs(ref.y.T).max(axis=0)
    assert err.max() < 1e-6


def test_horizon_zero():
    scn = single_group(100, 1e-4, 1, 1, horizon=0)
    traj = integrate(scn)
    assert len(traj) == 1 and traj.t[0] == 0


def test_trajectory_grid_and_csv_round_trip():
    scn = single_group(100, 1e-4, 1, 1, horizon=50)
    traj = integrate(scn, OdeSettings(step=1.0, output_stride=7))
    assert traj.t[0] == 0 and traj.t[-1] == 50 and (np.diff(traj.t) > 0).all()
    back = read_trajectory_csv(traj.to_csv())
    np.testing.assert_array_equal(back["t"], traj.t)
    np.testing.assert_array_equal(back["i_a"], traj.compartment("i_a")[:, 0])
    assert traj.to_csv().splitlines()[0] == "t,group,s_star,s_prime,i_a,i_b,r"


def test_two_sided_monotone_and_fills_population():
    scn = single_group(1000, 5e-5, 1, 1, interaction="aggressive_two_sided", horizon=5000)
    traj = integrate(scn)
    ia, ib = traj.prey_total(), traj.compartment("i_b")[:, 0]
    assert (np.diff(ia) >= -1e-9).all() and (np.diff(ib) >= -1e-9).all()
    assert ia[-1] + ib[-1] == pytest.approx(1000, rel=1e-6)
    m = trajectory_metrics(traj, scn)
    assert {"tl", "al", "ta", "tr"} <= m.censored


def test_conservative_ta_not_reached():
    scn = single_group(1000, 5e-5, 1, 1, interaction="conservative_one_sided", horizon=5000)
    m = trajectory_metrics(integrate(scn), scn)
    assert m.ta is None and "ta" in m.censored
    assert m.tr is not None


def test_conservation_with_batches():
    scn = Scenario(groups=(GroupParams(100, 1e-4), GroupParams(50, 1e-4)), inter_rates=((0, 1e-5), (1e-5, 0)),
                   initial_prey=(1, 0), initial_predator=(0, 1), delay=30, horizon=500,
                   manual_removal_rate=1e-3,
                   batch_schedule=(BatchEvent(100, {"s_star": (10, 5)}), BatchEvent(200, {"s_star": (-3, 0)})))
    traj = integrate(scn)
    expected = np.where(traj.t < 100, 150, np.where(traj.t < 200, 165, 162))
    # the post-jump state replaces the sample at the event time
    expected = np.where(traj.t == 100, 165, expected)
    expected = np.where(traj.t == 200, 162, expected)
    np.testing.assert_allclose(traj.totals(), expected, rtol=1e-6)
    assert any(lbl == "inject" for _, lbl in traj.markers)


def test_batch_below_zero_is_error():
    from wormnet.model import ModelError

    scn = single_group(10, 1e-4, 0, 0, batch_schedule=(BatchEvent(1, {"s_prime": (-5,)}),), horizon=5)
    with pytest.raises(ModelError):
        integrate(scn)


def test_step_too_large():
    scn = single_group(1000, 5e-3, 1, 1)
    with pytest.raises(StepTooLarge):
        integrate(scn.with_(horizon=100), OdeSettings(step=50))


def test_no_prey_metrics():
    scn = single_group(100, 1e-4, 0, 1, horizon=2000)
    m = trajectory_metrics(integrate(scn), scn)
    assert m.ti == 0 and m.mi == 0 and m.tl == 0 and m.al is None and m.tr == 0


def test_default_scenario_smoke():
    scn = single_group(1000, 5e-5, 1, 1)
    m = trajectory_metrics(integrate(scn), scn)
    assert 1 <= m.mi <= m.ti
    assert m.al * m.ti == pytest.approx(m.tl)
    assert m.tr <= m.ta


@settings(max_examples=15)
@given(k=st.floats(0.25, 4.0))
def test_beta_invariance(k):
    scn = single_group(500, 1e-4, 1, 1, horizon=4e4)
    base = trajectory_metrics(integrate(scn, OdeSettings(step=0.5)), scn)
    s2 = scn.with_(groups=(GroupParams(500, 1e-4 * k),), horizon=4e4 / k)
    m = trajectory_metrics(integrate(s2, OdeSettings(step=0.5 / k)), s2)
    assert m.ti == pytest.approx(base.ti, rel=1e-3) and m.mi == pytest.approx(base.mi, rel=1e-3)
    assert m.tl == pytest.approx(base.tl / k, rel=1e-3)
    assert m.ta == pytest.approx(base.ta / k, rel=1e-3) and m.tr == pytest.approx(base.tr / k, rel=1e-3)


@settings(max_examples=15)
@given(p=st.floats(0.05, 1.0))
def test_p_equivalence(p):
    a = single_group(300, 2e-4, 1, 1, on_prob=p, horizon=3000)
    b = single_group(300, 2e-4 * p, 1, 1, horizon=3000)
    ta, tb = integrate(a), integrate(b)
    np.testing.assert_allclose(ta.y, tb.y, rtol=1e-9, atol=1e-9)


def test_delay_additivity_saturated():
    n, beta = 200, 1e-4
    unit = broadcast_time_estimate(n, beta)
    d0 = 4 * unit
    res = []
    for d in (d0, d0 + unit):
        scn = single_group(n, beta, 1, 1, delay=d, horizon=d0 + 20 * unit)
        res.append(trajectory_metrics(integrate(scn), scn))
    assert res[1].ta - res[0].ta == pytest.approx(unit, rel=0.01)
    assert res[1].tr - res[0].tr == pytest.approx(unit, rel=0.01)


def test_suppression_condition_examples():
    assert suppression_condition(single_group(1000, 5e-5, 1, 1)) == [False]
    assert suppression_condition(single_group(1009, 5e-5, 1, 1000)) == [True]
    scn = Scenario(groups=(GroupParams(1, 1e-4), GroupParams(10, 1e-4)), initial_prey=(1, 0), initial_predator=(0, 1))
    assert suppression_condition(scn)[0] is True


def test_suppressed_case_keeps_prey_flat():
    scn = single_group(1009, 5e-5, 1, 1000, horizon=2000)
    m = trajectory_metrics(integrate(scn), scn)
    assert m.ti == pytest.approx(1, abs=0.05) and m.mi == pytest.approx(1, abs=1e-9)


def test_broadcast_time():
    assert broadcast_time_estimate(1000, 5e-5) == pytest.approx(287.86, abs=0.01)
    assert broadcast_time_estimate(2, 1) == pytest.approx(0.98175, abs=1e-5)
    assert broadcast_time_estimate(50, 2e-3) == pytest.approx(broadcast_time_estimate(50, 1e-3) / 2)
    for bad in ((1, 1.0), (10, 0.0)):
        with pytest.raises(DomainError):
            broadcast_time_estimate(*bad)


def test_metric_ordering_random():
    rng = np.random.default_rng(4)
    for _ in range(10):
        n = int(rng.integers(50, 500))
        scn = single_group(n, float(rng.uniform(1e-5, 1e-3)), 1, int(rng.integers(1, 10)),
                           horizon=20 * broadcast_time_estimate(n, 1e-5))
        m = trajectory_metrics(integrate(scn, OdeSettings(step=0.5)), scn)
        assert isinstance(m, Metrics)
        assert 1 <= m.mi <= m.ti + 1e-9
        assert m.al <= m.tl or m.ti < 1
        if m.ta is not None and m.tr is not None:
            assert m.tr <= m.ta
