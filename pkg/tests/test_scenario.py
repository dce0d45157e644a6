import dataclasses
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btbsim.converter import ControlMode
from btbsim.errors import ScenarioError
from btbsim.network import LoadEvent
from btbsim.scenario import (
    BranchSpec,
    Event,
    InitMode,
    SimulationConfig,
    SourceSpec,
    bundled_scenario_path,
    load_scenario,
    parse_quantity,
    parse_scenario,
    parse_text,
    scenario_to_text,
)

BASE = bundled_scenario_path("scenario_a").read_text()


def edit(text: str, old: str, new: str) -> str:
    assert old in text
    return text.replace(old, new, 1)


def parse_error(text: str) -> ScenarioError:
    with pytest.raises(ScenarioError) as info:
        parse_text(text, path="case.cfg")
    return info.value


# --- shipped scenarios ---


@pytest.mark.parametrize("name", ["scenario_a", "scenario_b"])
def test_shipped_scenarios_parse_without_warnings(name):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sc = parse_scenario(bundled_scenario_path(name))
    assert sc.name == name
    assert sc.gsc.r_g == 0.001 and sc.gsc.l_g == pytest.approx(0.2e-3)
    assert sc.gsc.c_f == pytest.approx(50e-6) and sc.gsc.l_f == pytest.approx(1e-3)
    assert sc.msc == sc.gsc
    assert sc.c_dc == pytest.approx(5000e-6)
    assert sc.v_dc_ref == 600.0
    assert (sc.gsc_control.k_p, sc.gsc_control.k_i) == (700.0, 800.0)
    assert sc.gsc_control.t_f == sc.msc_control.t_f == pytest.approx(5e-3)
    assert sc.gsc_control.mode is ControlMode.DC_REGULATION
    assert sc.msc_control.mode is ControlMode.PQ_SETPOINT
    assert sc.simulation == SimulationConfig(dt=1e-3, t_stop=20.0)
    assert sc.gsc.s_rated == 50e3 and sc.gsc.v_ll_rms == 208.0


@pytest.mark.parametrize(
    "name, schedule",
    [
        ("scenario_a", [(7.0, 45e3), (15.0, 20e3)]),
        ("scenario_b", [(7.0, 20e3), (15.0, -20e3)]),
    ],
)
def test_shipped_event_schedules(name, schedule):
    sc = load_scenario(name)
    assert sc.msc_control.p_ref == 0.0
    assert [(ev.time, ev.value) for ev in sc.events] == schedule
    assert all(ev.target == "msc.p_ref" for ev in sc.events)


def test_load_scenario_accepts_cfg_suffix_and_paths(tmp_path):
    assert load_scenario("scenario_a.cfg") == load_scenario("scenario_a")
    p = tmp_path / "mine.cfg"
    p.write_text(BASE)
    assert load_scenario(p).name == "mine"


# --- quantities ---


@pytest.mark.parametrize(
    "text, unit, value",
    [
        ("0.2 mH", "H", 0.2e-3),
        ("50 uF", "F", 50e-6),
        ("50 µF", "F", 50e-6),
        ("45 kW", "W", 45e3),
        ("-20 kW", "W", -20e3),
        ("5 ms", "s", 5e-3),
        ("0.001 ohm", "ohm", 0.001),
        ("0.001 Ω", "ohm", 0.001),
        ("800 W/(V*s)", "W/(V*s)", 800.0),
        ("7", "s", 7.0),
        ("1e-3", "s", 1e-3),
        ("2 MVA", "VA", 2e6),
    ],
)
def test_parse_quantity(text, unit, value):
    assert parse_quantity(text, unit) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("text, unit", [("5 mV", "s"), ("abc", "s"), ("5 kk", "W"), ("", "W")])
def test_parse_quantity_rejects(text, unit):
    with pytest.raises(ValueError):
        parse_quantity(text, unit)


# --- diagnostics ---


def test_missing_c_dc_names_key_and_section():
    err = parse_error(edit(BASE, "c_dc = 5000 uF\n", ""))
    assert "c_dc" in str(err) and "[dclink]" in str(err)
    assert err.path == "case.cfg" and err.line is not None


def test_events_out_of_order_reports_both_times():
    text = edit(BASE, "reduce_20kw = 15 msc.p_ref 20 kW", "reduce_20kw = 5 msc.p_ref 20 kW")
    err = parse_error(text)
    assert "7.0" in str(err) and "5.0" in str(err)
    assert err.line == text.splitlines().index("reduce_20kw = 5 msc.p_ref 20 kW") + 1


def test_unknown_key_location():
    text = edit(BASE, "l_g = 0.2 mH", "l_g = 0.2 mH\nl_gg = 3 mH")
    err = parse_error(text)
    assert "l_gg" in str(err)
    assert err.line == text.splitlines().index("l_gg = 3 mH") + 1
    assert err.column == 8
    assert str(err).startswith(f"case.cfg:{err.line}:8:")


def test_bad_unit_location():
    text = edit(BASE, "l_g = 0.2 mH", "l_g = 0.2 mF")
    err = parse_error(text)
    assert "unit" in str(err) and err.line == text.splitlines().index("l_g = 0.2 mF") + 1


@pytest.mark.parametrize(
    "old, new, fragment",
    [
        ("r_g = 0.001 ohm", "r_g = -0.001 ohm", "negative"),
        ("[dclink]", "[dc_link]", "unknown section"),
        ("t_f = 5 ms", "t_f = 0 ms", "t_f"),
        ("dt = 1 ms", "dt = 20 ms", "dt"),
        ("init_mode = equilibrium", "init_mode = lukewarm", "init_mode"),
        ("import_45kw = 7 msc.p_ref 45 kW", "import_45kw = 7 msc.x_ref 45 kW", "target"),
        ("import_45kw = 7 msc.p_ref 45 kW", "import_45kw = 7 msc.p_ref", "expected"),
        ("source.utility = 0 208 0", "source.utility = 3 208 0", "out of range"),
        ("pcc_bus = 0\nsource.utility", "pcc_bus = 0\nbogus = 1\nsource.utility", "bogus"),
        ("k_p = 700 W/V", "k_p = 700 W/V\nk_p = 1 W/V", "duplicate"),
    ],
)
def test_parse_errors(old, new, fragment):
    err = parse_error(edit(BASE, old, new))
    assert fragment in str(err)


def test_missing_required_section():
    start = BASE.index("[gsc]")
    err = parse_error(BASE[:start] + BASE[BASE.index("[msc]"):])
    assert "[gsc]" in str(err)


def test_documented_defaults():
    text = edit(BASE, "dt = 1 ms\n", "")
    text = edit(text, "init_mode = equilibrium\n", "")
    sc = parse_text(text)
    assert sc.simulation.dt == 1e-3
    assert sc.simulation.init_mode is InitMode.EQUILIBRIUM
    assert sc.v_dc_start == sc.v_dc_ref


def test_load_events_and_networks():
    text = BASE.replace(
        "[microgrid_network]\nbuses = 1\npcc_bus = 0\nsource.microgrid = 0 208 0",
        "[microgrid_network]\nbuses = 2\npcc_bus = 1\nsource.microgrid = 0 208 0 0.01 0.0005\n"
        "branch.feeder = 0 1 0.02 0.0001 1e-6\nload.heater = 1 4.33",
    )
    text += "heater_off = 16 microgrid.load.heater off\nmotor_on = 17 microgrid.load.motor 1:3+2j\n"
    sc = parse_text(text)
    assert sc.microgrid.sources["microgrid"] == SourceSpec(0, 208.0, 0.0, 0.01, 0.5e-3)
    assert sc.microgrid.branches["feeder"] == BranchSpec(0, 1, 0.02, 0.1e-3, 1e-6)
    assert sc.microgrid.loads == {"heater": (1, 4.33 + 0j)}
    assert sc.events[-2:] == (
        Event(16.0, "microgrid.load.heater", LoadEvent("heater", None, None), "heater_off"),
        Event(17.0, "microgrid.load.motor", LoadEvent("motor", 1, 3 + 2j), "motor_on"),
    )
    assert sc.events[-1].network_side == "microgrid"


def test_undeclared_load_needs_bus():
    err = parse_error(BASE + "x = 9 grid.load.motor 3\n")
    assert "bus" in str(err)


# --- round trip ---


@pytest.mark.parametrize("name", ["scenario_a", "scenario_b"])
def test_round_trip_shipped(name):
    sc = load_scenario(name)
    assert parse_text(scenario_to_text(sc), name=sc.name) == sc


finite = st.floats(1e-6, 1e4)


@settings(max_examples=200, deadline=None)
@given(
    r=finite, l=finite, c=finite, k_p=st.floats(0, 1e4), k_i=st.floats(0, 1e4),
    t_f=finite, p=st.floats(-1e5, 1e5), q=st.floats(-1e5, 1e5),
    dt=st.floats(1e-6, 1e-2), times=st.lists(st.floats(0, 100), max_size=4),
    cold=st.booleans(), limit=st.booleans(),
)
def test_round_trip_random(r, l, c, k_p, k_i, t_f, p, q, dt, times, cold, limit):
    base = load_scenario("scenario_a")
    gsc = dataclasses.replace(base.gsc, r_g=r, l_g=l, c_f=c)
    events = tuple(Event(t, "msc.p_ref", p * k, f"e{k}") for k, t in enumerate(sorted(times)))
    # t_f and the clamp switch are shared by both converters in the file format
    shared = dict(t_f=t_f, current_limit=limit)
    sc = dataclasses.replace(
        base,
        gsc=gsc,
        gsc_control=dataclasses.replace(base.gsc_control, k_p=k_p, k_i=k_i, q_ref=q, **shared),
        msc_control=dataclasses.replace(base.msc_control, p_ref=p, **shared),
        simulation=SimulationConfig(dt=dt, t_stop=30.0, init_mode=InitMode.COLD if cold else InitMode.EQUILIBRIUM),
        events=events,
        v_dc_init=550.5,
    )
    assert parse_text(scenario_to_text(sc), name=sc.name) == sc
