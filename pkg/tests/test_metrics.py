import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from wormnet.events import EventKind as E
from wormnet.events import EventLog
from wormnet.metrics import (
    DegenerateDenominator,
    DivisionByZero,
    Metrics,
    compute_y,
    finish_metrics,
    metrics_from_log,
    metrics_from_record,
    metrics_record,
    read_metrics_csv,
    relative_metrics,
    summarize,
    write_metrics_csv,
)
from wormnet.model import GroupParams, Scenario, single_group


def test_compute_y():
    assert compute_y(single_group(100, 1e-5, 1, 1)) == 1
    assert compute_y(single_group(2000, 1e-5, 1, 1000)) == 1000
    scn = Scenario(groups=(GroupParams(10, 1e-5), GroupParams(10, 1e-5)), initial_prey=(2, 3), initial_predator=(3, 7))
    assert compute_y(scn) == 2
    with pytest.raises(DivisionByZero):
        compute_y(single_group(100, 1e-5, 0, 1))


def test_relative_metrics():
    m = Metrics(ti=500, mi=100, tl=1.0)
    assert relative_metrics(m, single_group(1000, 1e-5)).ti_rel == 0.5
    rel = relative_metrics(Metrics(ti=400, mi=40, tl=1.0), single_group(1000, 1e-5, 0, 0, cooperation=0.5, immunization=0.2))
    assert rel.ti_rel == pytest.approx(1.0) and rel.mi_rel == pytest.approx(0.1)
    with pytest.raises(DegenerateDenominator):
        relative_metrics(m, single_group(1000, 1e-5, 0, 0, immunization=1.0))


def test_single_episode():
    log = EventLog.from_records([(0.0, E.PREY_INFECT, 0, -1), (5.0, E.TERMINATE, 0, 1)])
    m = metrics_from_log(log, horizon=10.0)
    assert (m.ti, m.mi, m.tl, m.al, m.tr) == (1, 1, 5, 5, 5)
    assert not m.censored


def test_empty_log():
    m = metrics_from_log(EventLog.empty(), horizon=10.0)
    assert m.ti == 0 and m.mi == 0 and m.tl == 0 and m.al is None
    assert m.tr == 0 and m.ta == 0


def test_open_episode_is_censored():
    log = EventLog.from_records([(0.0, E.ARRIVE, 0, 0), (1.0, E.PREY_INFECT, 0, -1)])
    m = metrics_from_log(log, horizon=11.0)
    assert m.tl == 10.0 and m.tr is None and m.ta is None
    assert {"tl", "al", "tr", "ta"} <= m.censored


def test_batch_time_floors_tr():
    log = EventLog.from_records([(0.0, E.PREY_INFECT, 0, -1), (5.0, E.TERMINATE, 0, 1)])
    assert metrics_from_log(log, t_batch=50.0, horizon=100.0).tr == 50.0


def test_finish_metrics_al_identity():
    m = finish_metrics(4, 2, 10.0, 7.0, 6.0, False)
    assert m.al * m.ti == m.tl
    assert finish_metrics(0, 0, 0.0, 1.0, 1.0, False).al is None


# brute-force oracle: materialise the whole population after every event

_KINDS = [E.ARRIVE, E.ARRIVE_IMMUNE, E.PREY_INFECT, E.VACCINATE, E.TERMINATE, E.INJECT, E.REMOVE,
          E.ON_OFF_TOGGLE, E.DEPART, E.RESUSCEPTIBLE]


def _oracle(recs, horizon):
    state, immune, stash = {}, set(), {}
    snaps = []
    ever = set()
    for t, kind, a, b in recs:
        if kind == E.ARRIVE:
            state[a] = stash.pop(a) if state.get(a) == "away" else "S"
        elif kind == E.ARRIVE_IMMUNE:
            immune.add(a)
            state[a] = "SP"
        elif kind == E.PREY_INFECT:
            ever.add(a)
            state[a] = "A"
        elif kind in (E.VACCINATE, E.TERMINATE, E.INJECT):
            state[a] = "B"
        elif kind == E.REMOVE:
            state[a] = "R"
        elif kind == E.RESUSCEPTIBLE:
            state[a] = "SP" if a in immune else "S"
        elif kind == E.DEPART:
            stash[a] = state.get(a, "S")
            state[a] = "away"
        vals = list(state.values())
        snaps.append((t, vals.count("A"), sum(vals.count(x) for x in ("S", "SP", "A"))))
    times = [s[0] for s in snaps] + [horizon]
    tl = sum(snaps[k][1] * (times[k + 1] - times[k]) for k in range(len(snaps)))
    mi = max([s[1] for s in snaps], default=0)
    prey_end = snaps[-1][1] if snaps else 0
    exp_end = snaps[-1][2] if snaps else 0

    def zero_time(col):
        last = 0.0
        prev = 0
        for s in snaps:
            if prev > 0 and s[col] == 0:
                last = s[0]
            prev = s[col]
        return last

    tr = zero_time(1) if prey_end == 0 else None
    ta = zero_time(2) if exp_end == 0 else None
    return len(ever), mi, tl, tr, ta


event_lists = st.lists(
    st.tuples(st.floats(0, 100, allow_nan=False), st.sampled_from(_KINDS), st.integers(0, 5), st.integers(-1, 5)),
    max_size=20,
).map(lambda r: sorted(r, key=lambda x: x[0]))


@given(event_lists)
def test_matches_timeline_oracle(recs):
    horizon = 150.0
    m = metrics_from_log(EventLog.from_records(recs), horizon=horizon)
    ti, mi, tl, tr, ta = _oracle(recs, horizon)
    assert m.ti == ti and m.mi == mi
    assert m.tl == pytest.approx(tl, abs=1e-9)
    assert m.tr == tr and m.ta == ta
    assert m.mi <= m.ti
    if m.al is not None:
        assert m.al * m.ti == pytest.approx(m.tl)


@given(event_lists, st.lists(st.tuples(st.floats(0, 100, allow_nan=False), st.integers(0, 5)), max_size=10))
def test_toggle_events_are_no_ops(recs, toggles):
    base = metrics_from_log(EventLog.from_records(recs), horizon=150.0)
    noisy = sorted(recs + [(t, E.ON_OFF_TOGGLE, a, 1) for t, a in toggles], key=lambda x: x[0])
    assert metrics_from_log(EventLog.from_records(noisy), horizon=150.0) == base


def test_summarize_quartiles_and_not_reached():
    runs = [Metrics(ti=x, mi=1, tl=1.0, ta=float(x), tr=None if x == 5 else 1.0,
                    censored=frozenset({"tr"}) if x == 5 else frozenset()) for x in (1, 2, 3, 4, 5)]
    s = summarize(runs, single_group(100, 1e-5))
    assert s.median["ti"] == 3 and s.q1["ti"] == 2 and s.q3["ti"] == 4
    assert s.not_reached["tr"] == 1 and s.q3["tr"] == 1.0
    assert s.median["ti_rel"] == pytest.approx(0.03)


def test_summarize_median_infinite_when_mostly_censored():
    runs = [Metrics(ti=1, mi=1, tl=1.0, tr=None, censored=frozenset({"tr"}))] * 3
    assert math.isinf(summarize(runs).median["tr"])


def test_summarize_single_run_equals_run():
    m = Metrics(ti=7, mi=3, tl=12.0, al=12 / 7, ta=9.0, tr=8.0)
    s = summarize([m])
    for k in ("ti", "mi", "tl", "al", "ta", "tr"):
        assert s.median[k] == s.q1[k] == s.q3[k] == getattr(m, k)


@given(st.floats(0, 1e4), st.floats(0, 1e4), st.booleans(), st.booleans())
def test_csv_round_trip(ti, tl, open_prey, no_ta):
    ti = float(int(ti))
    m = finish_metrics(ti, min(ti, 3.0), tl, None if no_ta else 5.0, 4.0, open_prey)
    rows = read_metrics_csv(write_metrics_csv([metrics_record(m, single_group(10000, 1e-5))]))
    back = metrics_from_record(rows[0])
    assert back == m
    assert rows[0]["y"] == 1.0


def test_relative_bounded_for_sim_logs():
    from wormnet.sim import simulate_run

    scn = single_group(30, 1e-3, 1, 1, cooperation=0.7, immunization=0.3, horizon=1e5)
    for seed in range(5):
        _, m = simulate_run(scn, seed)
        rel = relative_metrics(m, scn)
        assert 0 <= rel.mi_rel <= rel.ti_rel <= 1 + 1e-12
