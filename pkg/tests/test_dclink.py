import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btbsim.dclink import DcLinkState, dv_dc_dt, energy
from btbsim.errors import ScenarioError

C_DC = 5000e-6


@pytest.mark.parametrize(
    "i_g, i_m, expected",
    [(-75.0, 75.0, 0.0), (0.0, 75.0, -15_000.0), (0.0, 0.0, 0.0)],
)
def test_dv_dc_dt_examples(i_g, i_m, expected):
    assert dv_dc_dt(DcLinkState(600.0, C_DC, i_g, i_m)) == pytest.approx(expected, abs=1e-12)


def test_energy_examples():
    assert energy(DcLinkState(600.0, C_DC)) == pytest.approx(900.0)
    assert energy(DcLinkState(0.0, C_DC)) == 0.0
    assert energy(DcLinkState(1200.0, C_DC)) == pytest.approx(4 * energy(DcLinkState(600.0, C_DC)))


def test_capacitance_must_be_positive():
    with pytest.raises(ScenarioError):
        DcLinkState(600.0, 0.0)


def test_deposit_updates_only_given_side():
    s = DcLinkState(600.0, C_DC)
    s.deposit(i_dc_m=10.0)
    assert (s.i_dc_g, s.i_dc_m) == (0.0, 10.0)
    s.deposit(i_dc_g=-4.0)
    assert (s.i_dc_g, s.i_dc_m) == (-4.0, 10.0)


@settings(max_examples=1000)
@given(st.floats(1.0, 1000.0), st.floats(-200.0, 200.0), st.floats(-200.0, 200.0))
def test_discharge_sign_convention(v, i_g, i_m):
    # positive DC current discharges the capacitor: dE/dt = -v (i_g + i_m)
    s = DcLinkState(v, C_DC, i_g, i_m)
    de_dt = C_DC * v * dv_dc_dt(s)
    assert de_dt == pytest.approx(-v * (i_g + i_m), rel=1e-12, abs=1e-9)
