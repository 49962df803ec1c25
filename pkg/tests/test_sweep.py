import numpy as np
import pytest

from wormnet.config import ConfigError, dump_scenario
from wormnet.model import GroupParams, Scenario, single_group
from wormnet.sweep import SweepSpec, apply_param, load_sweep, plot_script, read_sweep_csv, run_sweep, sweep_csv


def test_apply_param_variants():
    base = Scenario(groups=(GroupParams(90, 1e-4), GroupParams(10, 2e-4)), inter_rates=((0, 1e-5), (1e-5, 0)),
                    initial_prey=(2, 0), initial_predator=(0, 1))
    assert apply_param(base, "y", 5).initial_predator == (0, 10)
    assert [g.intra_rate for g in apply_param(base, "beta", 3e-4).groups] == [3e-4, 3e-4]
    assert apply_param(base, "beta11", 7e-4).groups[0].intra_rate == 7e-4
    assert apply_param(base, "beta12", 2e-6).inter_rates == ((0, 2e-6), (2e-6, 0))
    assert [g.n_nodes for g in apply_param(base, "n", 200).groups] == [180, 20]
    assert apply_param(base, "group_size", 30).groups[1].n_nodes == 30
    assert apply_param(base, "c", 0.5).cooperation == 0.5
    assert apply_param(base, "i", 0.2).immunization == 0.2
    assert apply_param(base, "p", 0.3).on_prob == 0.3
    assert apply_param(base, "d", 60).delay == 60
    with pytest.raises(ConfigError):
        apply_param(single_group(10, 1e-3), "beta12", 1e-3)


def test_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec(single_group(10, 1e-3), "zeta", (1,))
    with pytest.raises(ConfigError):
        SweepSpec(single_group(10, 1e-3), "y", ())
    with pytest.raises(ConfigError):
        SweepSpec(single_group(10, 1e-3), "beta", (1,), engine="trace", trace="x.csv")


def test_y_sweep_ode_non_increasing():
    spec = SweepSpec(single_group(1000, 5e-5, 1, 1), "y", (1, 10, 100, 500), engine="ode")
    rows, errors = run_sweep(spec)
    assert not errors
    ti = [r["median"] for r in rows if r["metric"] == "ti"]
    assert all(b <= a for a, b in zip(ti, ti[1:]))


def test_beta_sweep_flat_ti():
    spec = SweepSpec(single_group(1000, 5e-5, 1, 1, horizon=3e5), "beta", (2.5e-5, 5e-5, 1e-4), engine="ode")
    rows, _ = run_sweep(spec)
    ti = np.array([r["median"] for r in rows if r["metric"] == "ti"])
    assert np.ptp(ti) / ti.mean() < 0.01


def test_p_sweep_sim():
    spec = SweepSpec(single_group(200, 1e-4, 1, 1, horizon=1e6, on_off_interval=1.0), "p", (0.5, 1.0),
                     engine="sim", runs=200, seed=3)
    rows, _ = run_sweep(spec)
    rel = {r["value"]: r["median"] for r in rows if r["metric"] == "ti_rel"}
    tl = {r["value"]: r["median"] for r in rows if r["metric"] == "tl"}
    assert rel[0.5] == pytest.approx(rel[1.0], rel=0.25)
    assert tl[0.5] > tl[1.0]


def test_failed_point_recorded_and_run_continues():
    spec = SweepSpec(single_group(100, 1e-3, 1, 1), "y", (1, 500), engine="ode")
    rows, errors = run_sweep(spec)
    assert {r["value"] for r in rows} == {1}
    assert errors and errors[0][0] == 500 and "NegativeCompartment" in errors[0][1]


def test_csv_round_trip_and_plot_script():
    spec = SweepSpec(single_group(100, 1e-3, 1, 1), "y", (1, 2), engine="ode")
    rows, _ = run_sweep(spec)
    text = sweep_csv(rows)
    assert text.splitlines()[0] == "param,value,metric,median,q1,q3,censored"
    back = read_sweep_csv(text)
    assert [(r["value"], r["metric"], r["median"]) for r in back] == [(r["value"], r["metric"], r["median"]) for r in rows]
    script = plot_script("y", "sweep.csv")
    compile(script, "plot_sweep.py", "exec")
    assert "sweep.csv" in script


def test_load_sweep(tmp_path):
    dump_scenario(single_group(100, 1e-3, 1, 1), tmp_path / "base.yaml")
    (tmp_path / "sw.yaml").write_text("scenario: base.yaml\nparam: c\nvalues: [0.5, 1]\nengine: ode\n")
    spec = load_sweep(tmp_path / "sw.yaml")
    assert spec.values == (0.5, 1.0) and spec.base.groups[0].n_nodes == 100
    (tmp_path / "bad.yaml").write_text("scenario: base.yaml\nparam: c\nvalues: [1]\nspeed: 3\n")
    with pytest.raises(ConfigError):
        load_sweep(tmp_path / "bad.yaml")
