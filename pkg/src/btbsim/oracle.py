"""Reference solutions for validating the phasor engine.

Shares no time-loop code with :mod:`btbsim.engine`.  Here each converter is a
controlled current source ``I = (i_d + j i_q) V/|V|`` behind the Thevenin
equivalent ``V = V_th + Z_th I`` of its network at the PCC, and the six-state
ODE is integrated with classical RK4 at a fine fixed step.

This checks integration and network-coupling accuracy of the coarse-step
engine.  It is not a switching (EMT) model: there is no PWM ripple, so no
output filtering is needed before comparing waveforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConvergenceError,
    DcLinkCollapseError,
    DivergenceError,
    LowVoltageError,
    ModelError,
    ScenarioError,
)
from .network import LoadEvent
from .output import LOG_COLUMNS, STATE_COLUMNS, SimulationLog
from .scenario import InitMode, NetworkSpec, Scenario

PCC_TOL = 1e-14
PCC_MAX_ITER = 100


@dataclass(frozen=True)
class OracleConfig:
    dt_fine: float = 1e-5
    #: Spacing of logged rows; defaults to the scenario's coarse dt.
    log_interval: float | None = None


# --- network reduction -----------------------------------------------------


def thevenin_at_pcc(spec: NetworkSpec, loads: dict, omega: float) -> tuple[complex, complex]:
    """Open-circuit voltage and driving-point impedance seen from the PCC.

    ``loads`` maps name -> (bus, z ohms) and replaces ``spec.loads``.
    """
    n = spec.buses
    y = np.zeros((n, n), dtype=complex)
    inj = np.zeros(n, dtype=complex)
    fixed = {}
    for src in spec.sources.values():
        if src.r is None:
            fixed[src.bus] = src.emf
        else:
            zs = complex(src.r, omega * src.l)
            y[src.bus, src.bus] += 1 / zs
            inj[src.bus] += src.emf / zs
    for br in spec.branches.values():
        ys = 1 / complex(br.r, omega * br.l)
        sh = 0.5j * omega * br.c
        a, b = br.from_bus, br.to_bus
        y[a, a] += ys + sh
        y[b, b] += ys + sh
        y[a, b] -= ys
        y[b, a] -= ys
    for bus, z in loads.values():
        y[bus, bus] += 1 / z
    pcc = spec.pcc_bus
    if pcc in fixed:
        return complex(fixed[pcc]), 0j
    known = sorted(fixed)
    unknown = [b for b in range(n) if b not in fixed]
    y_uu = y[np.ix_(unknown, unknown)]
    rhs = inj[unknown] - y[np.ix_(unknown, known)] @ np.array([fixed[b] for b in known], dtype=complex)
    unit = np.zeros(len(unknown), dtype=complex)
    k = unknown.index(pcc)
    unit[k] = 1.0
    try:
        sol = np.linalg.solve(y_uu, np.column_stack([rhs, unit]))
    except np.linalg.LinAlgError:
        raise ModelError("network has no unique solution") from None
    return complex(sol[k, 0]), complex(sol[k, 1])


def _pcc_voltage(v_th: complex, z_th: complex, i_dq: complex, v_guess: complex) -> complex:
    """Solve ``V = V_th + Z_th i_dq V/|V|`` by fixed-point iteration."""
    if z_th == 0:
        return v_th
    v = v_guess if v_guess != 0 else v_th
    for _ in range(PCC_MAX_ITER):
        mag = abs(v)
        if mag == 0:
            raise LowVoltageError("PCC voltage collapsed to zero")
        v_new = v_th + z_th * i_dq * (v / mag)
        if abs(v_new - v) <= PCC_TOL * abs(v_new):
            return v_new
        v = v_new
    raise ConvergenceError("PCC voltage iteration did not converge (network too weak?)")


# --- operating configuration -----------------------------------------------


@dataclass
class _SideConfig:
    spec: NetworkSpec
    loads: dict
    z: complex
    t_f: float
    p_ref: float
    q_ref: float
    v_min: float
    i_max: float | None
    r: float = field(init=False)

    def __post_init__(self):
        self.r = self.z.real


@dataclass
class _Operating:
    """Set-points and loads in force; mutated by events."""

    g: _SideConfig
    m: _SideConfig
    k_p: float
    k_i: float
    v_dc_ref: float
    c_dc: float
    omega: float

    @classmethod
    def from_scenario(cls, sc: Scenario) -> _Operating:
        w = sc.omega

        def side(spec, params, ctl, p_ref):
            return _SideConfig(
                spec,
                dict(spec.loads),
                complex(params.r_g, w * params.l_g),
                ctl.t_f,
                p_ref,
                ctl.q_ref,
                ctl.min_voltage_fraction * params.v_ll_rms * math.sqrt(2 / 3),
                params.s_rated / (1.5 * params.v_ll_rms * math.sqrt(2 / 3)) if ctl.current_limit else None,
            )

        gc = sc.gsc_control
        return cls(
            side(sc.grid, sc.gsc, gc, 0.0),
            side(sc.microgrid, sc.msc, sc.msc_control, sc.msc_control.p_ref),
            gc.k_p,
            gc.k_i,
            gc.v_dc_ref,
            sc.c_dc,
            w,
        )

    def apply(self, target: str, value):
        if isinstance(value, LoadEvent):
            side = self.g if target.startswith("grid.") else self.m
            if value.z is None:
                side.loads.pop(value.name, None)
            else:
                bus = value.bus if value.bus is not None else side.loads[value.name][0]
                side.loads[value.name] = (bus, value.z)
        elif target == "msc.p_ref":
            self.m.p_ref = value
        elif target == "msc.q_ref":
            self.m.q_ref = value
        elif target == "gsc.q_ref":
            self.g.q_ref = value
        elif target == "gsc.v_dc_ref":
            self.v_dc_ref = value
        else:
            raise ScenarioError(f"unknown set-point {target!r}")

    def thevenin(self):
        return (
            thevenin_at_pcc(self.g.spec, self.g.loads, self.omega),
            thevenin_at_pcc(self.m.spec, self.m.loads, self.omega),
        )


def _refs(p: float, q: float, v_d: float, side: _SideConfig) -> tuple[float, float]:
    if not v_d > side.v_min:
        raise LowVoltageError(f"PCC voltage {v_d:.6g} V below guard {side.v_min:.6g} V")
    i_d = 2.0 * p / (3.0 * v_d)
    i_q = -2.0 * q / (3.0 * v_d)
    if side.i_max is not None:
        mag = math.hypot(i_d, i_q)
        if mag > side.i_max:
            i_d *= side.i_max / mag
            i_q *= side.i_max / mag
    return i_d, i_q


# --- fine-step integration -------------------------------------------------


class _Model:
    """Right-hand side for one interval of constant set-points and loads."""

    def __init__(self, op: _Operating, vg_guess: complex, vm_guess: complex):
        (self.vg_th, self.zg_th), (self.vm_th, self.zm_th) = op.thevenin()
        self.op = op
        self.vg = vg_guess or self.vg_th
        self.vm = vm_guess or self.vm_th

    def voltages(self, igd, igq, imd, imq):
        self.vg = _pcc_voltage(self.vg_th, self.zg_th, complex(igd, igq), self.vg)
        self.vm = _pcc_voltage(self.vm_th, self.zm_th, complex(imd, imq), self.vm)
        return self.vg, self.vm

    def rhs(self, igd, igq, pi, imd, imq, vdc, _w=0.0):
        """Derivatives of the six states plus the DC-link energy meter."""
        op = self.op
        g, m = op.g, op.m
        if not vdc > 0:
            raise DcLinkCollapseError(f"DC-link voltage collapsed to {vdc!r} V")
        vg, vm = self.voltages(igd, igq, imd, imq)
        ag = abs(vg)
        am = abs(vm)
        # DC power 3/2 Re(E conj I) with E = V + z I in the PCC-aligned frame
        pdg = 1.5 * (ag * igd + g.r * (igd * igd + igq * igq))
        pdm = 1.5 * (am * imd + m.r * (imd * imd + imq * imq))
        err = vdc - op.v_dc_ref
        rgd, rgq = _refs(op.k_p * err + op.k_i * pi, g.q_ref, ag, g)
        rmd, rmq = _refs(m.p_ref, m.q_ref, am, m)
        return (
            (rgd - igd) / g.t_f,
            (rgq - igq) / g.t_f,
            err,
            (rmd - imd) / m.t_f,
            (rmq - imq) / m.t_f,
            -(pdg + pdm) / (vdc * op.c_dc),
            pdg + pdm,
        )

    def outputs(self, t, x) -> list:
        igd, igq, pi, imd, imq, vdc, w = x
        vg, vm = self.voltages(igd, igq, imd, imq)
        row = [t, vdc]
        extra = []
        per_side = []
        for v, i_d, i_q, side in ((vg, igd, igq, self.op.g), (vm, imd, imq, self.op.m)):
            u = v / abs(v)
            i_net = complex(i_d, i_q) * u
            e_net = v + side.z * i_net
            s_pcc = 1.5 * v * i_net.conjugate()
            p_dc = 1.5 * (e_net * i_net.conjugate()).real
            e_dq = e_net / u
            per_side.append((v, s_pcc, p_dc, e_dq))
        (vg, sg, pdg, eg), (vm, sm, pdm, em) = per_side
        row += [pdg / vdc, pdm / vdc, sg.real, sg.imag, sm.real, sm.imag]
        row += [abs(vg), math.atan2(vg.imag, vg.real), abs(vm), math.atan2(vm.imag, vm.real)]
        row += [eg.real, eg.imag, em.real, em.imag]
        extra = [pdg, pdm, igd, igq, pi, imd, imq, w]
        return row + extra


def _rk4(model: _Model, x: tuple, h: float, n: int) -> tuple:
    f = model.rhs
    h2 = 0.5 * h
    h6 = h / 6.0
    a, b, c, d, e, g, w = x
    for _ in range(n):
        # the meter w does not feed back, so it is not passed to f
        k1 = f(a, b, c, d, e, g)
        k2 = f(a + h2 * k1[0], b + h2 * k1[1], c + h2 * k1[2], d + h2 * k1[3], e + h2 * k1[4], g + h2 * k1[5])
        k3 = f(a + h2 * k2[0], b + h2 * k2[1], c + h2 * k2[2], d + h2 * k2[3], e + h2 * k2[4], g + h2 * k2[5])
        k4 = f(a + h * k3[0], b + h * k3[1], c + h * k3[2], d + h * k3[3], e + h * k3[4], g + h * k3[5])
        a += h6 * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0])
        b += h6 * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1])
        c += h6 * (k1[2] + 2.0 * (k2[2] + k3[2]) + k4[2])
        d += h6 * (k1[3] + 2.0 * (k2[3] + k3[3]) + k4[3])
        e += h6 * (k1[4] + 2.0 * (k2[4] + k3[4]) + k4[4])
        g += h6 * (k1[5] + 2.0 * (k2[5] + k3[5]) + k4[5])
        w += h6 * (k1[6] + 2.0 * (k2[6] + k3[6]) + k4[6])
    out = (a, b, c, d, e, g, w)
    if not all(math.isfinite(v) for v in out):
        raise DivergenceError("non-finite state in reference integration", last_good=x)
    return out


def run_fine(scenario: Scenario, config: OracleConfig | None = None, *, t_stop: float | None = None) -> SimulationLog:
    """Integrate the continuous model with RK4 at ``config.dt_fine``.

    Logged every ``log_interval`` (default: the scenario's dt) with the same
    columns as the phasor engine.  Events take effect at the first fine step
    whose time is not before the event time.
    """
    config = config or OracleConfig()
    sim = scenario.simulation
    h = config.dt_fine
    log_dt = config.log_interval or sim.dt
    if h > log_dt / 10 * (1 + 1e-9):
        raise ScenarioError(f"dt_fine={h!r} must be at most a tenth of the logging step {log_dt!r}")
    ratio = int(round(log_dt / h))
    if abs(ratio * h - log_dt) > 1e-9 * log_dt:
        raise ScenarioError("logging step must be an integer multiple of dt_fine")
    t_end = sim.t_stop if t_stop is None else t_stop
    n_total = int(round(t_end / log_dt)) * ratio

    op = _Operating.from_scenario(scenario)
    if sim.init_mode is InitMode.EQUILIBRIUM:
        ss = _steady(op, scenario.v_dc_start)
        x = tuple(ss.states[c] for c in STATE_COLUMNS) + (0.0,)
    else:
        x = (0.0, 0.0, 0.0, 0.0, 0.0, scenario.v_dc_start, 0.0)
    model = _Model(op, 0j, 0j)

    event_steps = [(max(0, math.ceil((ev.time - 1e-6 * h) / h)), ev) for ev in scenario.events]
    rows = [model.outputs(0.0, x)]
    k = 0
    ei = 0
    try:
        while k < n_total:
            changed = False
            while ei < len(event_steps) and event_steps[ei][0] <= k:
                op.apply(event_steps[ei][1].target, event_steps[ei][1].value)
                ei += 1
                changed = True
            if changed:
                model = _Model(op, model.vg, model.vm)
            next_log = (k // ratio + 1) * ratio
            next_event = event_steps[ei][0] if ei < len(event_steps) else n_total
            k_stop = min(next_log, max(next_event, k + 1), n_total)
            x = _rk4(model, x, h, k_stop - k)
            k = k_stop
            if k % ratio == 0:
                rows.append(model.outputs(k * h, x))
    except ModelError as exc:
        exc.t = k * h
        exc.log = SimulationLog.from_rows(rows, "oracle")
        raise
    return SimulationLog.from_rows(rows, "oracle")


# --- steady state ----------------------------------------------------------

STEADY_TOL = 1e-12
STEADY_MAX_ITER = 500
STEADY_DAMPING = 0.7


@dataclass
class SteadyState:
    states: dict[str, float]
    outputs: dict[str, float]
    iterations: int
    residual: float


def _steady(op: _Operating, v_dc: float) -> SteadyState:
    (vg_th, zg_th), (vm_th, zm_th) = op.thevenin()
    g, m = op.g, op.m
    ig = im = 0j
    vg, vm = vg_th, vm_th
    resid = math.inf
    for it in range(1, STEADY_MAX_ITER + 1):
        vm = _pcc_voltage(vm_th, zm_th, im, vm)
        vg = _pcc_voltage(vg_th, zg_th, ig, vg)
        am, ag = abs(vm), abs(vg)
        im_new = complex(*_refs(m.p_ref, m.q_ref, am, m))
        p_dc_m = 1.5 * (am * im_new.real + m.r * abs(im_new) ** 2)
        igq = -2.0 * g.q_ref / (3.0 * ag)
        # 3/2 (|V| i_d + R (i_d^2 + i_q^2)) = -p_dc_m, root nearest -p/(1.5|V|)
        c = g.r * igq * igq + p_dc_m / 1.5
        disc = ag * ag - 4.0 * g.r * c
        if disc < 0:
            raise ConvergenceError("no real GSC current balances the DC link")
        igd = -2.0 * c / (ag + math.sqrt(disc))
        ig_new = complex(igd, igq)
        resid = max(abs(ig_new - ig), abs(im_new - im)) / max(1.0, abs(ig_new), abs(im_new))
        ig = ig + STEADY_DAMPING * (ig_new - ig)
        im = im + STEADY_DAMPING * (im_new - im)
        if resid < STEADY_TOL:
            break
    else:
        raise ConvergenceError(f"steady state did not converge in {STEADY_MAX_ITER} iterations (residual {resid:.3g})")
    ig, im = ig_new, im_new
    vg = _pcc_voltage(vg_th, zg_th, ig, vg)
    vm = _pcc_voltage(vm_th, zm_th, im, vm)
    p_star = 1.5 * abs(vg) * ig.real
    if g.i_max is not None and abs(ig) > g.i_max * (1 + 1e-12):
        raise ConvergenceError("GSC current limit prevents a DC-link equilibrium")
    if op.k_i > 0:
        pi = (p_star - op.k_p * (v_dc - op.v_dc_ref)) / op.k_i
    elif p_star == 0:
        pi = 0.0
    else:
        raise ConvergenceError("k_i = 0: DC-link voltage cannot settle at its reference under load")
    states = dict(zip(STATE_COLUMNS, (ig.real, ig.imag, pi, im.real, im.imag, v_dc)))
    model = _Model(op, vg, vm)
    row = model.outputs(math.nan, tuple(states[c] for c in STATE_COLUMNS) + (0.0,))
    outputs = {c: v for c, v in zip(LOG_COLUMNS, row) if c not in ("t", "w_dc")}
    return SteadyState(states, outputs, it, resid)


def steady_state(scenario: Scenario, setpoints: dict | None = None, *, after_events: bool = False) -> SteadyState:
    """Equilibrium of the continuous model for constant set-points.

    ``setpoints`` maps event targets (``"msc.p_ref"``, ``"gsc.q_ref"``, ...)
    to values and overrides the scenario's initial configuration.  With
    ``after_events`` every scenario event is applied first, giving the final
    operating point.  V_dc equals its reference (integral action).
    """
    op = _Operating.from_scenario(scenario)
    if after_events:
        for ev in scenario.events:
            op.apply(ev.target, ev.value)
    for target, value in (setpoints or {}).items():
        op.apply(target, value)
    return _steady(op, op.v_dc_ref)
