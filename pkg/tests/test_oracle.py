import dataclasses
import math

import numpy as np
import pytest

from btbsim import oracle
from btbsim.errors import ConvergenceError, ScenarioError
from btbsim.oracle import OracleConfig, run_fine, steady_state, thevenin_at_pcc
from btbsim.output import STATE_COLUMNS
from btbsim.scenario import Event, InitMode, NetworkSpec, SourceSpec, BranchSpec, load_scenario

BASE = load_scenario("scenario_a")
V_PEAK = 208.0 * math.sqrt(2.0 / 3.0)
T_F = 5e-3
OMEGA = 2 * math.pi * 60


def constant(p_m=0.0, q_g=0.0, events=(), k_i=None, limit=False, **sim):
    gc = dataclasses.replace(BASE.gsc_control, q_ref=q_g, current_limit=limit)
    if k_i is not None:
        gc = dataclasses.replace(gc, k_i=k_i)
    sc = dataclasses.replace(
        BASE,
        events=tuple(events),
        gsc_control=gc,
        msc_control=dataclasses.replace(BASE.msc_control, p_ref=p_m, current_limit=limit),
    )
    return sc.with_simulation(**sim) if sim else sc


def state_matrix(log):
    return np.column_stack([log[c] for c in STATE_COLUMNS])


# --- network reduction ---


def test_thevenin_of_ideal_pcc():
    spec = NetworkSpec(1, 0, {"s": SourceSpec(0, 208.0)})
    v, z = thevenin_at_pcc(spec, {}, OMEGA)
    assert v == pytest.approx(V_PEAK, rel=1e-15) and z == 0


def test_thevenin_divider():
    spec = NetworkSpec(2, 1, {"s": SourceSpec(0, 208.0, 0.0, 0.1, 1e-3)}, {"f": BranchSpec(0, 1, 0.05, 0.0)})
    v, z = thevenin_at_pcc(spec, {"l": (1, 4.0 + 0j)}, OMEGA)
    z_up = complex(0.1, OMEGA * 1e-3) + 0.05
    # closed form: source divided across the load, source and feeder in parallel with it
    assert v == pytest.approx(V_PEAK * 4.0 / (4.0 + z_up), rel=1e-12)
    assert z == pytest.approx(z_up * 4.0 / (z_up + 4.0), rel=1e-12)


# --- fine integration ---


def test_equilibrium_is_constant():
    log = run_fine(constant(20e3, q_g=5e3, t_stop=0.2))
    x = state_matrix(log)
    assert np.max(np.abs(x - x[0]) / np.maximum(np.abs(x[0]), 1.0)) <= 1e-12


def test_lag_matches_closed_form():
    p = 1.5 * V_PEAK * 100.0  # 100 A reference
    log = run_fine(constant(p, init_mode=InitMode.COLD, t_stop=0.05), OracleConfig(log_interval=1e-3))
    t = log.t
    exact = 100.0 * (1.0 - np.exp(-t / T_F))
    assert log["msc_i_d"][log.at(T_F)] == pytest.approx(63.212055882855765, abs=1e-9)
    assert np.max(np.abs(log["msc_i_d"] - exact)) <= 1e-9 * 100.0


def test_step_size_independence():
    sc = constant(events=[Event(0.0105, "msc.p_ref", 45e3, "up")], t_stop=0.2)
    a = run_fine(sc, OracleConfig(dt_fine=1e-5))
    b = run_fine(sc, OracleConfig(dt_fine=5e-6))
    xa, xb = state_matrix(a), state_matrix(b)
    scale = np.maximum(np.max(np.abs(xa), axis=0), 1.0)
    assert np.max(np.abs(xa - xb) / scale) < 1e-10


@pytest.mark.parametrize("p_m", [45e3, -20e3])
def test_long_time_limit_is_the_steady_state(p_m):
    # the equilibrium of RK4 is the equilibrium of the ODE, so a coarser fine step suffices
    sc = constant(p_m, q_g=3e3, init_mode=InitMode.COLD, t_stop=30.0)
    log = run_fine(sc, OracleConfig(dt_fine=1e-4, log_interval=0.1))
    ss = steady_state(sc)
    for c in STATE_COLUMNS:
        assert log[c][-1] == pytest.approx(ss.states[c], rel=1e-8, abs=1e-12), c


def test_fine_step_must_resolve_the_log_step():
    with pytest.raises(ScenarioError):
        run_fine(constant(t_stop=0.01), OracleConfig(dt_fine=2e-4))


def test_oracle_shares_no_code_with_the_engine():
    assert "engine" not in {getattr(v, "__name__", "").rpartition(".")[2] for v in vars(oracle).values()}
    assert "Simulator" not in vars(oracle)


# --- steady state ---


def test_steady_state_zero():
    ss = steady_state(BASE)
    assert all(ss.states[c] == 0.0 for c in STATE_COLUMNS if c != "v_dc")
    assert ss.states["v_dc"] == 600.0
    assert ss.residual < 1e-12


def test_steady_state_45kw():
    out = steady_state(BASE, {"msc.p_ref": 45e3}).outputs
    assert out["i_dc_m"] == pytest.approx(75.0, rel=0.005)
    assert out["i_dc_g"] == pytest.approx(-75.0, rel=0.005)
    assert out["i_dc_g"] + out["i_dc_m"] == pytest.approx(0.0, abs=1e-9)
    assert out["p_m"] == pytest.approx(45e3, rel=1e-12)
    loss = -out["p_g"] - 45e3
    assert 0 < loss < 0.005 * 45e3


def test_steady_state_export():
    out = steady_state(BASE, {"msc.p_ref": -20e3}).outputs
    assert out["i_dc_m"] == pytest.approx(-33.333, rel=0.005)
    assert out["i_dc_g"] == pytest.approx(33.333, rel=0.005)
    assert out["p_g"] > 0 and out["p_m"] < 0


def test_steady_state_after_events():
    assert steady_state(BASE, after_events=True).outputs["p_m"] == pytest.approx(20e3, rel=1e-12)
    sc = load_scenario("scenario_b")
    assert steady_state(sc, after_events=True).outputs["p_m"] == pytest.approx(-20e3, rel=1e-12)


def test_steady_state_without_integral_action():
    with pytest.raises(ConvergenceError):
        steady_state(constant(10e3, k_i=0.0))
    assert steady_state(constant(0.0, k_i=0.0)).states["gsc_pi_integral"] == 0.0


def test_steady_state_clamped_gsc():
    # the MSC clamps at its rating; the GSC then cannot also cover the losses
    with pytest.raises(ConvergenceError):
        steady_state(constant(60e3, limit=True))
