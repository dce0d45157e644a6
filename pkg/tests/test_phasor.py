import cmath
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btbsim.errors import FrameMismatchError, SingularEquivalentError
from btbsim.phasor import (
    DqPair,
    Phasor,
    SourceEquivalent,
    from_dq,
    three_phase_power,
    thevenin_to_norton,
    to_dq,
)

V_PEAK = 169.83
DEG30 = math.radians(30)

magnitudes = st.one_of(st.just(0.0), st.floats(1e-6, 1e6))
angles = st.floats(-math.pi, math.pi)
phasors = st.builds(Phasor.from_polar, magnitudes, angles)
impedances = st.builds(complex, st.floats(1e-6, 10.0), st.floats(-10.0, 10.0))


def close(a: complex, b: complex, rel: float, abs_: float = 0.0) -> bool:
    return abs(a - b) <= rel * max(abs(a), abs(b)) + abs_


# --- frame transforms ---


def test_to_dq_aligned_frame():
    x = to_dq(Phasor.from_polar(V_PEAK, DEG30), DEG30)
    assert x.d == pytest.approx(V_PEAK, rel=1e-14)
    assert x.q == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("frame", [0.0, 1.0, -2.5, math.pi])
def test_to_dq_zero_vector(frame):
    x = to_dq(Phasor(0.0, 0.0), frame)
    assert (x.d, x.q) == (0.0, 0.0)


def test_to_dq_rotated_frame():
    # frozen from an independent polar evaluation: 169.83 cos/sin 30 deg
    x = to_dq(Phasor.from_polar(V_PEAK, DEG30), 0.0)
    assert x.d == pytest.approx(147.07709432471123, rel=1e-12)
    assert x.q == pytest.approx(84.915, rel=1e-12)
    assert (x.d, x.q) == pytest.approx((147.08, 84.92), abs=0.01)


def test_from_dq_examples():
    v = from_dq(DqPair(V_PEAK, 0.0, DEG30))
    assert v.magnitude() == pytest.approx(V_PEAK, rel=1e-14)
    assert v.angle() == pytest.approx(DEG30, rel=1e-14)
    assert complex(from_dq(DqPair(0.0, 0.0, 1.3))) == 0j
    v = from_dq(DqPair(147.08, 84.92, 0.0))
    assert v.magnitude() == pytest.approx(V_PEAK, abs=0.01)
    assert math.degrees(v.angle()) == pytest.approx(30.0, abs=0.01)


def test_angle_range_includes_pi():
    assert Phasor(-1.0, -0.0).angle() == math.pi
    assert Phasor(-1.0, 0.0).angle() == math.pi


@settings(max_examples=1000)
@given(phasors, angles)
def test_round_trip_phasor(v, theta):
    back = from_dq(to_dq(v, theta))
    assert close(complex(back), complex(v), 1e-12)


@settings(max_examples=1000)
@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), angles)
def test_round_trip_dq(d, q, theta):
    x = to_dq(from_dq(DqPair(d, q, theta)), theta)
    assert close(x.as_complex(), complex(d, q), 1e-12, 1e-300)


@settings(max_examples=1000)
@given(phasors, angles)
def test_phasor_invariants(v, theta):
    assert v.magnitude() >= 0.0
    assert -math.pi < v.angle() <= math.pi
    x = to_dq(v, theta)
    assert math.hypot(x.d, x.q) == pytest.approx(v.magnitude(), rel=1e-12, abs=1e-300)


# --- Thevenin / Norton ---


def test_norton_of_interface_reactor():
    e = Phasor(V_PEAK, 0.0)
    z = complex(0.001, 0.0754)
    i = thevenin_to_norton(e, z)
    # frozen from polar division |e|/|z| at -arg(z)
    expected = cmath.rect(V_PEAK / abs(z), -cmath.phase(z))
    assert complex(i) == pytest.approx(expected, rel=1e-13)
    assert complex(i) == pytest.approx(complex(29.867256637168, -2251.991150442478), rel=1e-12)
    assert abs(z * complex(i) - complex(e)) < 1e-9


def test_norton_trivial_cases():
    assert complex(thevenin_to_norton(Phasor(0.0, 0.0), complex(0.3, 2.0))) == 0j
    assert complex(thevenin_to_norton(Phasor(1.0, 0.0), 1 + 0j)) == 1 + 0j


def test_norton_zero_impedance():
    with pytest.raises(SingularEquivalentError):
        thevenin_to_norton(Phasor(1.0, 0.0), 0j)
    with pytest.raises(SingularEquivalentError):
        SourceEquivalent(Phasor(1.0, 0.0), 0j)


@settings(max_examples=1000)
@given(phasors, impedances, phasors)
def test_norton_equivalence(e, z, v_t):
    src = SourceEquivalent(e, z)
    assert complex(src.i_norton) == complex(e) / z
    thevenin = (complex(e) - complex(v_t)) / z
    norton = complex(src.terminal_current(v_t))
    scale = (abs(complex(e)) + abs(complex(v_t))) / abs(z)
    assert abs(thevenin - norton) <= 1e-12 * scale


# --- power ---


def test_power_examples():
    p, q = three_phase_power(DqPair(V_PEAK, 0.0), DqPair(176.65, 0.0))
    assert p == pytest.approx(45_000.0, rel=1e-4)
    assert q == 0.0
    assert three_phase_power(DqPair(V_PEAK, 0.0), DqPair(0.0, 0.0)) == (0.0, 0.0)
    p, q = three_phase_power(DqPair(V_PEAK, 0.0), DqPair(0.0, -1.0))
    assert p == 0.0
    assert q == pytest.approx(254.745, rel=1e-12)


def test_power_frame_mismatch():
    with pytest.raises(FrameMismatchError):
        three_phase_power(DqPair(1.0, 0.0, 0.0), DqPair(1.0, 0.0, 0.1))


@settings(max_examples=1000)
@given(phasors, phasors, angles, angles)
def test_power_rotation_invariance(v, i, theta1, theta2):
    p1, q1 = three_phase_power(to_dq(v, theta1), to_dq(i, theta1))
    p2, q2 = three_phase_power(to_dq(v, theta2), to_dq(i, theta2))
    scale = max(1.0, 1.5 * v.magnitude() * i.magnitude())
    assert abs(p1 - p2) <= 1e-10 * scale
    assert abs(q1 - q2) <= 1e-10 * scale


@settings(max_examples=1000)
@given(phasors, phasors)
def test_power_matches_complex_form(v, i):
    p, q = three_phase_power(to_dq(v, 0.0), to_dq(i, 0.0))
    s = 1.5 * complex(v) * complex(i).conjugate()
    scale = max(1.0, abs(s))
    assert abs(p - s.real) <= 1e-12 * scale
    assert abs(q - s.imag) <= 1e-12 * scale
