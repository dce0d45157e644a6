"""Fixed-step phasor simulation of the back-to-back converter.

Each step follows the coupled predictor/corrector sequence:

1. apply events due at ``t`` (set-points, load admittances);
2. solve both networks with the converters' Norton injections ``E/z``;
3. lock the frame to the PCC voltage, rebuild E in dq from the state
   currents and evaluate the DC power and current of each converter;
4. predictor: Euler-advance every state with the derivatives at ``t``;
5. rebuild E from the predicted currents, re-solve the networks and
   re-evaluate the chain at ``t + dt``;
6. corrector: trapezoidal average of the two derivative sets (Heun);
7. rebuild E from the corrected currents and solve the networks once more
   for the final bus voltages, which are logged.

The two networks never exchange electrical quantities; the DC link is the
only coupling.  States: GSC (i_d, i_q, PI integral), MSC (i_d, i_q), V_dc.

Inside the loop dq pairs are packed as complex ``d + jq``; the frame is the
PCC voltage direction, so the PCC voltage in dq is the real number ``|V|``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import replace
from typing import NamedTuple

import numpy as np

from .converter import Converter, dc_power_c, internal_voltage_c
from .dclink import DcLinkState
from .errors import DcLinkCollapseError, DeadBusError, DivergenceError, InitializationError, ModelError
from .network import LoadEvent, update_admittance
from .output import LOG_COLUMNS, SimulationLog
from .scenario import InitMode, Scenario, SimulationConfig

INIT_TOL = 1e-10
INIT_MAX_ITER = 200
_CONVERTER_SHUNT = "__converter__"


class StateVector(NamedTuple):
    gsc_i_d: float = 0.0
    gsc_i_q: float = 0.0
    gsc_pi_integral: float = 0.0
    msc_i_d: float = 0.0
    msc_i_q: float = 0.0
    v_dc: float = 0.0

    def is_finite(self) -> bool:
        # inf - inf and nan both propagate to a non-finite sum
        return math.isfinite(sum(self))


def _axpy(x: StateVector, h: float, f: tuple) -> StateVector:
    return StateVector._make([a + h * b for a, b in zip(x, f)])


def _heun(x: StateVector, h: float, f0: tuple, f1: tuple) -> StateVector:
    half = 0.5 * h
    return StateVector._make([a + half * (b + c) for a, b, c in zip(x, f0, f1)])


class _Point(NamedTuple):
    """Network solution seen from one converter."""

    v: complex  # PCC voltage, network frame
    v_d: float  # PCC voltage in the aligned frame (v_q = 0)
    rot: complex  # exp(-j*theta), network -> converter frame
    i_dq: complex  # converter current (state)
    e_dq: complex  # filter-capacitor voltage


class _Side:
    """A converter and the network it is attached to."""

    def __init__(self, name, params, control, spec, omega):
        self.converter = Converter(name, params, control)
        self.params = params
        self.net = spec.build(omega, name)
        self.pcc = spec.pcc_bus
        self.z = params.z_interface(omega)
        self.y = 1.0 / self.z
        self.net.set_shunt(_CONVERTER_SHUNT, self.pcc, self.y)
        self.e = 0j
        self.refresh()

    def refresh(self):
        """Re-read network structure after a load change."""
        # PCC held by an ideal source: no solve needed
        self._v_fixed = self.net.bus_voltage(self.pcc) if self.pcc in self.net.fixed_buses else None

    def solve(self, e: complex, i_dq: complex) -> _Point:
        """Network solve with Norton injection ``e/z``, then the chain for state current ``i_dq``.

        The current is the lagged state, not ``(e - v)/z``: a step change in
        the PCC voltage must not move the current within the same step.
        """
        v = self._v_fixed
        if v is None:
            net = self.net
            net.injections[self.pcc] = e * self.y
            v = net.bus_voltage(self.pcc)
        v_d = abs(v)
        if v_d == 0.0:
            raise DeadBusError(f"{self.converter.name} PCC voltage is zero; PLL cannot align")
        rot = v.conjugate() / v_d
        return _Point(v, v_d, rot, i_dq, internal_voltage_c(v_d, i_dq, self.z))

    def emf(self, pt: _Point, i_d: float, i_q: float) -> complex:
        """Network-frame filter-capacitor voltage for state currents at a known PCC voltage."""
        return internal_voltage_c(pt.v_d, complex(i_d, i_q), self.z) / pt.rot

    def emf_for_current(self, i_net: complex) -> complex:
        """EMF whose Norton injection makes the PCC current exactly ``i_net``."""
        inj = self.net.injections
        inj[self.pcc] = 0.0
        v0 = self.net.bus_voltage(self.pcc)
        inj[self.pcc] = 1.0
        zpp = self.net.bus_voltage(self.pcc) - v0
        inj[self.pcc] = 0.0
        j = (i_net + v0 * self.y) / (1.0 - zpp * self.y)
        return j * self.z


class Simulator:
    """Phasor-domain simulation of one scenario.

    ``config`` overrides the scenario's ``[simulation]`` settings.
    """

    def __init__(self, scenario: Scenario, config: SimulationConfig | None = None):
        self.scenario = scenario
        self.config = config or scenario.simulation
        self.dt = self.config.dt
        omega = scenario.omega
        self.gsc = _Side("gsc", scenario.gsc, scenario.gsc_control, scenario.grid, omega)
        self.msc = _Side("msc", scenario.msc, scenario.msc_control, scenario.microgrid, omega)
        self.dclink = DcLinkState(scenario.v_dc_start, scenario.c_dc)
        self.events = list(scenario.events)
        self.k = 0
        self.x: StateVector | None = None
        self._f = None
        self._aux = None
        self.w_dc = 0.0
        self._next_event = 0
        self._sync_control()

    @property
    def t(self) -> float:
        return self.k * self.dt

    # --- model evaluation ---

    def _evaluate(self, x: StateVector, pg: _Point, pm: _Point):
        """State derivatives plus (pg, pm, p_dc_g, i_dc_g, p_dc_m, i_dc_m)."""
        igd, igq, _pi, imd, imq, v_dc = x
        if not v_dc > 0:
            raise DcLinkCollapseError(f"DC-link voltage collapsed to {v_dc!r} V")
        gsc = self.gsc.converter
        msc = self.msc.converter
        p_dc_g = dc_power_c(pg.e_dq, pg.i_dq)
        p_dc_m = dc_power_c(pm.e_dq, pm.i_dq)
        i_dc_g = p_dc_g / v_dc
        i_dc_m = p_dc_m / v_dc
        igd_ref, igq_ref = gsc.references(pg.v_d, v_dc, _pi)
        imd_ref, imq_ref = msc.references(pm.v_d, v_dc, 0.0)
        tg = self._t_f_g
        tm = self._t_f_m
        f = (
            (igd_ref - igd) / tg,
            (igq_ref - igq) / tg,
            v_dc - self._v_dc_ref,
            (imd_ref - imd) / tm,
            (imq_ref - imq) / tm,
            (-i_dc_g - i_dc_m) / self._c_dc,  # dclink.dv_dc_dt
        )
        return f, (pg, pm, p_dc_g, i_dc_g, p_dc_m, i_dc_m)

    def _sync_control(self):
        """Cache constants read on every evaluation; called after set-point events."""
        self._t_f_g = self.gsc.converter.control.t_f
        self._t_f_m = self.msc.converter.control.t_f
        self._v_dc_ref = self.gsc.converter.control.v_dc_ref
        self._c_dc = self.dclink.c_dc

    def _evaluate_current(self):
        x = self.x
        pg = self.gsc.solve(self.gsc.e, complex(x.gsc_i_d, x.gsc_i_q))
        pm = self.msc.solve(self.msc.e, complex(x.msc_i_d, x.msc_i_q))
        self._f, self._aux = self._evaluate(self.x, pg, pm)
        dclink = self.dclink
        dclink.v_dc = self.x.v_dc
        dclink.deposit(i_dc_g=self._aux[3], i_dc_m=self._aux[5])

    # --- initialization ---

    def initialize(self) -> StateVector:
        """Set the t=0 state; equilibrium or cold start per the config.

        Equilibrium: fixed-point iteration over network solve, converter
        chain and DC power balance, with V_dc at its start value and the PI
        integral preloaded so the GSC exactly balances the MSC.
        """
        sc = self.scenario
        v_dc = sc.v_dc_start
        gsc, msc = self.gsc, self.msc
        cold = self.config.init_mode is InitMode.COLD
        ig = im = 0j  # network-frame PCC currents
        eg = gsc.emf_for_current(0j)
        em = msc.emf_for_current(0j)
        igd = igq = imd = imq = 0.0
        change = math.inf
        for _ in range(INIT_MAX_ITER):
            pg = gsc.solve(eg, complex(igd, igq))
            pm = msc.solve(em, complex(imd, imq))
            if not cold:
                imd, imq = msc.converter.references(pm.v_d, v_dc, 0.0)
                p_dc_m = dc_power_c(internal_voltage_c(pm.v_d, complex(imd, imq), msc.z), complex(imd, imq))
                _, igq = gsc.converter.references(pg.v_d, gsc.converter.control.v_dc_ref, 0.0)
                # DC balance 3/2 (E_d i_d + E_q i_q) = -p_dc_m, with E from the last iterate.
                e_g = internal_voltage_c(pg.v_d, complex(igd, igq), gsc.z)
                igd = (-p_dc_m / 1.5 - e_g.imag * igq) / e_g.real
            ig_new = complex(igd, igq) / pg.rot
            im_new = complex(imd, imq) / pm.rot
            eg_new = gsc.emf_for_current(ig_new)
            em_new = msc.emf_for_current(im_new)
            change = max(abs(eg_new - eg), abs(em_new - em), abs(ig_new - ig), abs(im_new - im))
            eg, em, ig, im = eg_new, em_new, ig_new, im_new
            if change < INIT_TOL:
                break
        else:
            raise InitializationError(
                f"equilibrium iteration did not converge in {INIT_MAX_ITER} iterations (last change {change:.3g})",
                t=0.0,
            )
        pi_integral = 0.0
        if not cold:
            ctl = gsc.converter.control
            p_star = 1.5 * gsc.solve(eg, complex(igd, igq)).v_d * igd
            if ctl.k_i > 0:
                pi_integral = (p_star - ctl.k_p * (v_dc - ctl.v_dc_ref)) / ctl.k_i
            elif p_star != 0.0:
                raise InitializationError("k_i = 0 cannot hold a non-zero power equilibrium", t=0.0)
        gsc.e, msc.e = eg, em
        self.x = StateVector(igd, igq, pi_integral, imd, imq, v_dc)
        self.k = 0
        self._next_event = 0
        self.w_dc = 0.0
        self._evaluate_current()
        return self.x

    # --- events ---

    def _apply_events(self) -> bool:
        t = self.t
        applied = False
        while self._next_event < len(self.events):
            ev = self.events[self._next_event]
            if ev.time > t + 1e-6 * self.dt:
                break
            self._apply(ev)
            self._next_event += 1
            applied = True
        return applied

    def _apply(self, ev):
        if isinstance(ev.value, LoadEvent):
            side = self.gsc if ev.network_side == "grid" else self.msc
            update_admittance(side.net, ev.value)
            side.refresh()
            return
        who, attr = ev.target.split(".")
        conv = (self.gsc if who == "gsc" else self.msc).converter
        conv.control = replace(conv.control, **{attr: ev.value})
        self._sync_control()

    # --- time stepping ---

    def step(self) -> StateVector:
        """Advance one step of length dt."""
        if self.x is None:
            self.initialize()
        if self._apply_events():
            self._evaluate_current()
        dt = self.dt
        x = self.x
        f0 = self._f
        pg, pm = self._aux[0], self._aux[1]
        gsc, msc = self.gsc, self.msc

        # predictor
        xp = _axpy(x, dt, f0)
        pgp = gsc.solve(gsc.emf(pg, xp.gsc_i_d, xp.gsc_i_q), complex(xp.gsc_i_d, xp.gsc_i_q))
        pmp = msc.solve(msc.emf(pm, xp.msc_i_d, xp.msc_i_q), complex(xp.msc_i_d, xp.msc_i_q))
        f1, aux1 = self._evaluate(xp, pgp, pmp)
        aux0 = self._aux
        # energy meter on the same trapezoid as the states
        self.w_dc += 0.5 * dt * (aux0[2] + aux0[4] + aux1[2] + aux1[4])

        # corrector
        xn = _heun(x, dt, f0, f1)
        if not xn.is_finite():
            raise DivergenceError("non-finite state after corrector", t=self.t + dt, last_good=x)
        gsc.e = gsc.emf(pgp, xn.gsc_i_d, xn.gsc_i_q)
        msc.e = msc.emf(pmp, xn.msc_i_d, xn.msc_i_q)
        self.x = xn
        self.k += 1
        self._evaluate_current()
        return xn

    def row(self) -> tuple:
        """Log row at the current time (see ``output.LOG_COLUMNS``)."""
        x = self.x
        pg, pm, p_dc_g, i_dc_g, p_dc_m, i_dc_m = self._aux
        # S = 3/2 V conj(I) with V = v_d in the aligned frame.
        sg = 1.5 * pg.v_d * pg.i_dq.conjugate()
        sm = 1.5 * pm.v_d * pm.i_dq.conjugate()
        return (
            self.t, x.v_dc, i_dc_g, i_dc_m, sg.real, sg.imag, sm.real, sm.imag,
            pg.v_d, cmath.phase(pg.v), pm.v_d, cmath.phase(pm.v),
            pg.e_dq.real, pg.e_dq.imag, pm.e_dq.real, pm.e_dq.imag,
            p_dc_g, p_dc_m, x.gsc_i_d, x.gsc_i_q, x.gsc_pi_integral, x.msc_i_d, x.msc_i_q, self.w_dc,
        )

    def run(self) -> SimulationLog:
        """Initialize and integrate to ``t_stop``, logging every ``log_stride`` steps."""
        stride = self.config.log_stride
        n_steps = self.config.n_steps
        data = np.empty((n_steps // stride + 1, len(LOG_COLUMNS)))
        n = 0
        try:
            self.initialize()
            data[0] = self.row()
            n = 1
            for k in range(1, n_steps + 1):
                self.step()
                if k % stride == 0:
                    data[n] = self.row()
                    n += 1
        except ModelError as exc:
            if exc.t is None:
                exc.t = self.t
            exc.log = SimulationLog.from_rows(data[:n], "phasor")
            raise
        return SimulationLog.from_rows(data, "phasor")


def initialize(scenario: Scenario, config: SimulationConfig | None = None) -> StateVector:
    return Simulator(scenario, config).initialize()


def run(scenario: Scenario, config: SimulationConfig | None = None) -> SimulationLog:
    return Simulator(scenario, config).run()
