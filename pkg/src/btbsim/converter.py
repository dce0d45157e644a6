"""Averaged model of one AC/DC converter stage.

The same code path serves both ends of the back-to-back link.  The grid-side
converter (``ControlMode.DC_REGULATION``) derives its active-power reference
from a PI regulator on the DC-link voltage; the microgrid-side converter
(``ControlMode.PQ_SETPOINT``) takes P and Q references directly.

The inner current loop is modelled as a first-order lag with time constant
``t_f``.  The dq frame is locked to the PCC voltage by an ideal PLL.

Every algebraic relation below works on :class:`~btbsim.phasor.DqPair`
values sharing one frame; see :mod:`btbsim.phasor` for sign conventions.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import (
    DcLinkCollapseError,
    DeadBusError,
    FrameMismatchError,
    LowVoltageError,
    ScenarioError,
)
from .phasor import LL_RMS_TO_PEAK, DqPair, Phasor, three_phase_power

NOMINAL_OMEGA = 2.0 * math.pi * 60.0


class ControlMode(enum.Enum):
    DC_REGULATION = "dc_regulation"
    PQ_SETPOINT = "pq_setpoint"


@dataclass(frozen=True)
class ConverterParams:
    """Passive parameters of one converter stage (SI units).

    ``r_g``/``l_g`` is the interface reactor between the filter capacitor and
    the PCC; ``r_f``/``l_f`` the filter branch between the switching
    terminals and the capacitor ``c_f``.
    """

    r_g: float
    l_g: float
    c_f: float
    r_f: float
    l_f: float
    s_rated: float
    v_ll_rms: float
    omega_nom: float = NOMINAL_OMEGA

    def __post_init__(self):
        for name in ("r_g", "l_g", "c_f", "r_f", "l_f", "s_rated", "v_ll_rms", "omega_nom"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ScenarioError(f"converter parameter {name} must be positive, got {value!r}")

    @property
    def v_nominal_peak(self) -> float:
        return self.v_ll_rms * LL_RMS_TO_PEAK

    @property
    def i_rated_peak(self) -> float:
        return self.s_rated / (1.5 * self.v_nominal_peak)

    def z_interface(self, omega: float | None = None) -> complex:
        w = self.omega_nom if omega is None else omega
        return complex(self.r_g, w * self.l_g)


@dataclass(frozen=True)
class ControlConfig:
    mode: ControlMode
    t_f: float
    k_p: float = 0.0
    k_i: float = 0.0
    v_dc_ref: float | None = None
    p_ref: float = 0.0
    q_ref: float = 0.0
    current_limit: bool = False
    min_voltage_fraction: float = 0.1

    def __post_init__(self):
        if not self.t_f > 0:
            raise ScenarioError(f"t_f must be positive, got {self.t_f!r}")
        if self.k_p < 0 or self.k_i < 0:
            raise ScenarioError("PI gains must be non-negative")
        if self.mode is ControlMode.DC_REGULATION and not (
            self.v_dc_ref is not None and self.v_dc_ref > 0
        ):
            raise ScenarioError("DC regulation needs a positive v_dc_ref")
        if not 0 <= self.min_voltage_fraction < 1:
            raise ScenarioError("min_voltage_fraction must lie in [0, 1)")


@dataclass(frozen=True, slots=True)
class ConverterState:
    i_d: float = 0.0
    i_q: float = 0.0
    pi_integral: float = 0.0
    frame_angle: float = 0.0


@dataclass(frozen=True, slots=True)
class ConverterOutputs:
    e_source: DqPair
    i_f: DqPair
    v_t: DqPair
    p_dc: float
    i_dc: float
    p_pcc: float
    q_pcc: float
    p_dc_terminal: float


def align_frame(v_pcc: Phasor) -> tuple[float, DqPair]:
    """Ideal PLL: put the d-axis on the PCC voltage."""
    mag = v_pcc.magnitude()
    if mag == 0.0:
        raise DeadBusError("PCC voltage is zero; PLL cannot align")
    angle = v_pcc.angle()
    return angle, DqPair(mag, 0.0, angle)


def _check_frame(a: DqPair, b: DqPair):
    if a.frame_angle != b.frame_angle:
        raise FrameMismatchError(f"frames differ: {a.frame_angle!r} vs {b.frame_angle!r}")


def internal_voltage(v_dq: DqPair, i_dq: DqPair, params: ConverterParams, omega: float) -> DqPair:
    """Filter-capacitor voltage from KVL across the interface reactor."""
    _check_frame(v_dq, i_dq)
    x = omega * params.l_g
    return DqPair(
        v_dq.d + params.r_g * i_dq.d - x * i_dq.q,
        v_dq.q + params.r_g * i_dq.q + x * i_dq.d,
        v_dq.frame_angle,
    )


def filter_current(e: DqPair, i_dq: DqPair, params: ConverterParams, omega: float) -> DqPair:
    """Current through the filter branch (grid current plus capacitor current)."""
    _check_frame(e, i_dq)
    b = omega * params.c_f
    return DqPair(i_dq.d - b * e.q, i_dq.q + b * e.d, e.frame_angle)


def terminal_voltage(e: DqPair, i_f: DqPair, params: ConverterParams, omega: float) -> DqPair:
    """Switching-terminal voltage from KVL across the filter branch."""
    _check_frame(e, i_f)
    x = omega * params.l_f
    return DqPair(
        e.d + params.r_f * i_f.d - x * i_f.q,
        e.q + params.r_f * i_f.q + x * i_f.d,
        e.frame_angle,
    )


def dc_side(e: DqPair, i_dq: DqPair, v_dc: float) -> tuple[float, float]:
    """DC power and current drawn from the link, neglecting filter losses.

    Positive values mean the capacitor discharges into this converter.
    """
    if not v_dc > 0:
        raise DcLinkCollapseError(f"DC-link voltage collapsed to {v_dc!r} V")
    _check_frame(e, i_dq)
    p_dc = 1.5 * (e.d * i_dq.d + e.q * i_dq.q)
    return p_dc, p_dc / v_dc


# Complex forms of the relations above, with a dq pair packed as d + jq.
# Used by the time loops; they are algebraically identical.


def internal_voltage_c(v_dq: complex, i_dq: complex, z: complex) -> complex:
    """``E = V + (R + jwL) I``; complex form of :func:`internal_voltage`."""
    return v_dq + z * i_dq


def dc_power_c(e_dq: complex, i_dq: complex) -> float:
    """``3/2 Re(E conj(I))``; the power part of :func:`dc_side`."""
    return 1.5 * (e_dq.real * i_dq.real + e_dq.imag * i_dq.imag)


def reference_currents(p_ref: float, q_ref: float, v_d: float, v_min: float = 0.0) -> tuple[float, float]:
    """dq current references realising ``p_ref``/``q_ref`` at PCC voltage ``v_d``."""
    if not v_d > v_min or v_d <= 0.0:
        raise LowVoltageError(f"PCC voltage {v_d!r} V below guard threshold {v_min!r} V")
    return (2.0 / 3.0) * p_ref / v_d, -(2.0 / 3.0) * q_ref / v_d


def limit_current(i_d: float, i_q: float, i_max: float) -> tuple[float, float]:
    """Scale (i_d, i_q) onto the circle of radius ``i_max`` if outside it."""
    mag = math.hypot(i_d, i_q)
    if mag <= i_max:
        return i_d, i_q
    k = i_max / mag
    return i_d * k, i_q * k


def dc_voltage_pi(v_dc: float, cfg: ControlConfig, pi_integral: float) -> float:
    """Active-power reference from the DC-link voltage regulator.

    ``pi_integral`` is the time integral of ``v_dc - v_dc_ref``; it is a
    dynamic state advanced by the simulation engine, not here.
    """
    if cfg.mode is not ControlMode.DC_REGULATION:
        raise ValueError("dc_voltage_pi requires DC_REGULATION mode")
    return cfg.k_p * (v_dc - cfg.v_dc_ref) + cfg.k_i * pi_integral


def current_lag_derivatives(state: ConverterState, i_d_ref: float, i_q_ref: float, t_f: float) -> tuple[float, float]:
    return (i_d_ref - state.i_d) / t_f, (i_q_ref - state.i_q) / t_f


def active_power_reference(cfg: ControlConfig, v_dc: float, pi_integral: float) -> float:
    if cfg.mode is ControlMode.DC_REGULATION:
        return dc_voltage_pi(v_dc, cfg, pi_integral)
    return cfg.p_ref


def converter_outputs(
    v_dq: DqPair, i_dq: DqPair, v_dc: float, params: ConverterParams, omega: float
) -> ConverterOutputs:
    """Full algebraic chain for one converter at one instant.

    ``p_dc``/``i_dc`` use the capacitor-voltage form that neglects filter
    losses (what the time loop integrates).  ``p_dc_terminal`` evaluates the
    same power at the switching terminals and is diagnostic only.
    """
    e = internal_voltage(v_dq, i_dq, params, omega)
    i_f = filter_current(e, i_dq, params, omega)
    v_t = terminal_voltage(e, i_f, params, omega)
    p_dc, i_dc = dc_side(e, i_dq, v_dc)
    p_pcc, q_pcc = three_phase_power(v_dq, i_dq)
    p_term, _ = three_phase_power(v_t, i_f)
    return ConverterOutputs(e, i_f, v_t, p_dc, i_dc, p_pcc, q_pcc, p_term)


class Converter:
    """One converter stage: parameters, control configuration and state."""

    def __init__(self, name: str, params: ConverterParams, control: ControlConfig):
        self.name = name
        self.params = params
        self.control = control
        self.state = ConverterState()

    @property
    def control(self) -> ControlConfig:
        return self._control

    @control.setter
    def control(self, cfg: ControlConfig):
        self._control = cfg
        self._regulating = cfg.mode is ControlMode.DC_REGULATION
        self._v_min = cfg.min_voltage_fraction * self.params.v_nominal_peak
        self._i_max = self.params.i_rated_peak if cfg.current_limit else None

    @property
    def omega(self) -> float:
        return self.params.omega_nom

    @property
    def v_min(self) -> float:
        return self._v_min

    def references(self, v_d: float, v_dc: float, pi_integral: float) -> tuple[float, float]:
        c = self._control
        p_ref = c.k_p * (v_dc - c.v_dc_ref) + c.k_i * pi_integral if self._regulating else c.p_ref
        i_d_ref, i_q_ref = reference_currents(p_ref, c.q_ref, v_d, self._v_min)
        if self._i_max is not None:
            i_d_ref, i_q_ref = limit_current(i_d_ref, i_q_ref, self._i_max)
        return i_d_ref, i_q_ref
