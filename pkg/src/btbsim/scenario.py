"""Scenario data model and the flat INI scenario format.

A scenario file has the sections ``[simulation]``, ``[grid_network]``,
``[microgrid_network]``, ``[gsc]``, ``[msc]``, ``[dclink]``, ``[control]`` and
``[events]``.  Scalar values are SI numbers, optionally followed by a unit
with an SI prefix (``0.2 mH``, ``5000 uF``, ``45 kW``); a unit that does not
match the key is rejected.  See README.md for the full key table.

Multi-field entries take plain SI numbers separated by whitespace::

    source.<name> = <bus> <v_ll_rms> [<angle_deg> [<r> <l>]]
    branch.<name> = <from_bus> <to_bus> <r> <l> [<c_total>]
    load.<name>   = <bus> <z_ohms>

Events are ``<name> = <time> <target> <value>`` with targets ``msc.p_ref``,
``msc.q_ref``, ``gsc.q_ref``, ``gsc.v_dc_ref``, ``grid.load.<name>`` and
``microgrid.load.<name>``.  Load values are ``<bus>:<z_ohms>``, ``<z_ohms>``
(for a declared load) or ``off``.
"""

from __future__ import annotations

import cmath
import configparser
import enum
import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .converter import NOMINAL_OMEGA, ControlConfig, ControlMode, ConverterParams
from .errors import ScenarioError
from .network import Branch, LoadEvent, Network, Source
from .phasor import LL_RMS_TO_PEAK


class InitMode(enum.Enum):
    EQUILIBRIUM = "equilibrium"
    COLD = "cold"


@dataclass(frozen=True)
class SimulationConfig:
    dt: float = 1e-3
    t_stop: float = 20.0
    log_stride: int = 1
    init_mode: InitMode = InitMode.EQUILIBRIUM

    def __post_init__(self):
        if not 0 < self.dt <= 0.01:
            raise ScenarioError(f"dt must lie in (0, 0.01] s, got {self.dt!r}")
        if not self.t_stop > 0:
            raise ScenarioError(f"t_stop must be positive, got {self.t_stop!r}")
        if self.log_stride < 1:
            raise ScenarioError(f"log_stride must be >= 1, got {self.log_stride!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_stop / self.dt))


@dataclass(frozen=True)
class SourceSpec:
    bus: int
    v_ll_rms: float
    angle_deg: float = 0.0
    r: float | None = None
    l: float | None = None

    @property
    def emf(self) -> complex:
        return cmath.rect(self.v_ll_rms * LL_RMS_TO_PEAK, math.radians(self.angle_deg))

    def impedance(self, omega: float) -> complex | None:
        if self.r is None:
            return None
        return complex(self.r, omega * self.l)


@dataclass(frozen=True)
class BranchSpec:
    from_bus: int
    to_bus: int
    r: float
    l: float
    c: float = 0.0


@dataclass(frozen=True)
class NetworkSpec:
    buses: int
    pcc_bus: int
    sources: dict = field(default_factory=dict)
    branches: dict = field(default_factory=dict)
    loads: dict = field(default_factory=dict)  # name -> (bus, z ohms)

    def build(self, omega: float, name: str = "") -> Network:
        net = Network(
            self.buses,
            sources=[Source(s.bus, s.emf, s.impedance(omega)) for s in self.sources.values()],
            branches=[
                Branch(b.from_bus, b.to_bus, complex(b.r, omega * b.l), omega * b.c)
                for b in self.branches.values()
            ],
            name=name,
        )
        if not 0 <= self.pcc_bus < self.buses:
            raise ScenarioError(f"pcc_bus {self.pcc_bus} out of range in {name!r}")
        for load_name, (bus, z) in self.loads.items():
            net.set_shunt(load_name, bus, 1.0 / z)
        return net


EVENT_TARGETS = ("msc.p_ref", "msc.q_ref", "gsc.q_ref", "gsc.v_dc_ref")
_TARGET_UNITS = {"msc.p_ref": "W", "msc.q_ref": "var", "gsc.q_ref": "var", "gsc.v_dc_ref": "V"}


@dataclass(frozen=True)
class Event:
    time: float
    target: str
    value: float | LoadEvent
    name: str = ""

    @property
    def network_side(self) -> str | None:
        """``"grid"``/``"microgrid"`` for load events, else None."""
        if isinstance(self.value, LoadEvent):
            return self.target.split(".", 1)[0]
        return None


@dataclass(frozen=True)
class Scenario:
    grid: NetworkSpec
    microgrid: NetworkSpec
    gsc: ConverterParams
    msc: ConverterParams
    gsc_control: ControlConfig
    msc_control: ControlConfig
    c_dc: float
    v_dc_init: float | None = None
    simulation: SimulationConfig = SimulationConfig()
    events: tuple = ()
    f_nom: float = 60.0
    name: str = ""

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.f_nom

    @property
    def v_dc_ref(self) -> float:
        return self.gsc_control.v_dc_ref

    @property
    def v_dc_start(self) -> float:
        return self.v_dc_ref if self.v_dc_init is None else self.v_dc_init

    def with_simulation(self, **changes) -> Scenario:
        return replace(self, simulation=replace(self.simulation, **changes))


# --- units -----------------------------------------------------------------

_PREFIXES = {"p": 1e-12, "n": 1e-9, "u": 1e-6, "µ": 1e-6, "μ": 1e-6, "m": 1e-3, "k": 1e3, "M": 1e6}
_UNIT_ALIASES = {
    "ohm": ("ohm", "Ohm", "Ω"),
    "W/(V*s)": ("W/(V*s)", "W/(V.s)", "W/(V·s)", "W/V/s"),
}
_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QUANTITY = re.compile(rf"\s*({_NUMBER})\s*(\S*)\s*")


def parse_quantity(text: str, unit: str | None) -> float:
    """Parse ``"0.2 mH"`` style values into SI floats."""
    m = _QUANTITY.fullmatch(text)
    if m is None:
        raise ValueError(f"not a number: {text.strip()!r}")
    value = float(m.group(1))
    suffix = m.group(2)
    if not suffix:
        return value
    if unit is None:
        raise ValueError(f"unexpected unit {suffix!r} on a dimensionless value")
    for base in _UNIT_ALIASES.get(unit, (unit,)):
        if suffix == base:
            return value
        head = suffix[: -len(base)]
        if suffix.endswith(base) and head in _PREFIXES:
            return value * _PREFIXES[head]
    raise ValueError(f"bad unit {suffix!r}, expected {unit}")


def _parse_complex(text: str) -> complex:
    return complex(text.strip().strip("()").replace(" ", ""))


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# --- key tables ------------------------------------------------------------

# (unit, default); default _REQUIRED marks a mandatory key.
_REQUIRED = object()

_CONVERTER_KEYS = {
    "gsc": {"v_ll_rms": "V", "s_rated": "VA", "r_g": "ohm", "l_g": "H", "c_fg": "F", "r_fg": "ohm", "l_fg": "H"},
    "msc": {"v_ll_rms": "V", "s_rated": "VA", "r_m": "ohm", "l_m": "H", "c_fm": "F", "r_fm": "ohm", "l_fm": "H"},
}
_SCALAR_KEYS = {
    "simulation": {
        "dt": ("s", 1e-3),
        "t_stop": ("s", _REQUIRED),
        "log_stride": (int, 1),
        "init_mode": (InitMode, InitMode.EQUILIBRIUM),
        "f_nom": ("Hz", 60.0),
    },
    "dclink": {"c_dc": ("F", _REQUIRED), "v_dc_init": ("V", None)},
    "control": {
        "v_dc_ref": ("V", _REQUIRED),
        "k_p": ("W/V", _REQUIRED),
        "k_i": ("W/(V*s)", _REQUIRED),
        "t_f": ("s", _REQUIRED),
        "gsc_q_ref": ("var", 0.0),
        "msc_p_ref": ("W", 0.0),
        "msc_q_ref": ("var", 0.0),
        "current_limit": (bool, False),
        "min_voltage_fraction": (float, 0.1),
    },
}
for _sec, _keys in _CONVERTER_KEYS.items():
    _SCALAR_KEYS[_sec] = {k: (u, _REQUIRED) for k, u in _keys.items()}

_NETWORK_SECTIONS = {"grid_network": "grid", "microgrid_network": "microgrid"}
SECTIONS = ("simulation", "grid_network", "microgrid_network", "gsc", "msc", "dclink", "control", "events")


class _Locator:
    """Maps (section, key) to (line, column) in the raw text for diagnostics."""

    def __init__(self, text: str):
        self.sections: dict[str, int] = {}
        self.keys: dict[tuple[str, str], tuple[int, int]] = {}
        section = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            stripped = raw.strip()
            if not stripped or stripped[0] in "#;":
                continue
            if stripped.startswith("[") and "]" in stripped:
                section = stripped[1 : stripped.index("]")].strip()
                self.sections.setdefault(section, lineno)
                continue
            if section is not None and "=" in raw:
                key, _, value = raw.partition("=")
                col = len(key) + 2 + (len(value) - len(value.lstrip()))
                self.keys.setdefault((section, key.strip()), (lineno, col))

    def at(self, section, key=None):
        if key is not None and (section, key) in self.keys:
            return self.keys[(section, key)]
        return self.sections.get(section), None


class _Reader:
    def __init__(self, text: str, path):
        self.path = path
        self.loc = _Locator(text)
        cp = configparser.ConfigParser(
            interpolation=None,
            inline_comment_prefixes=("#", ";"),
            comment_prefixes=("#", ";"),
            strict=True,
            delimiters=("=",),
        )
        cp.optionxform = str
        try:
            cp.read_string(text, source=str(path) if path else "<string>")
        except configparser.DuplicateOptionError as exc:
            raise ScenarioError(f"duplicate key {exc.option!r} in [{exc.section}]", path=path, line=exc.lineno) from None
        except configparser.DuplicateSectionError as exc:
            raise ScenarioError(f"duplicate section [{exc.section}]", path=path, line=exc.lineno) from None
        except configparser.Error as exc:
            raise ScenarioError(f"syntax error: {exc}", path=path, line=getattr(exc, "lineno", None)) from None
        self.cp = cp
        for sec in cp.sections():
            if sec not in SECTIONS:
                line, _ = self.loc.at(sec)
                raise ScenarioError(f"unknown section [{sec}]", path=path, line=line)

    def error(self, message, section, key=None):
        line, col = self.loc.at(section, key)
        return ScenarioError(message, path=self.path, line=line, column=col)

    def items(self, section):
        if not self.cp.has_section(section):
            return []
        return list(self.cp.items(section, raw=True))

    def scalars(self, section) -> dict:
        table = _SCALAR_KEYS[section]
        if not self.cp.has_section(section):
            if any(d is _REQUIRED for _, d in table.values()):
                raise ScenarioError(f"missing section [{section}]", path=self.path)
        present = dict(self.items(section))
        out = {}
        for key, text in present.items():
            if key not in table:
                raise self.error(f"unknown key {key!r} in [{section}]", section, key)
        for key, (unit, default) in table.items():
            if key not in present:
                if default is _REQUIRED:
                    raise self.error(f"missing required key {key!r} in [{section}]", section)
                out[key] = default
                continue
            text = present[key]
            try:
                if unit is int:
                    value = int(text)
                elif unit is bool:
                    value = _parse_bool(text)
                elif unit is float:
                    value = parse_quantity(text, None)
                elif isinstance(unit, type) and issubclass(unit, enum.Enum):
                    value = unit(text.strip().lower())
                else:
                    value = parse_quantity(text, unit)
            except ValueError as exc:
                raise self.error(f"{section}.{key}: {exc}", section, key) from None
            if isinstance(value, float) and not math.isfinite(value):
                raise self.error(f"{section}.{key} must be finite", section, key)
            if isinstance(value, float) and value < 0 and key not in ("gsc_q_ref", "msc_p_ref", "msc_q_ref"):
                raise self.error(f"{section}.{key} must not be negative, got {value!r}", section, key)
            out[key] = value
        return out

    def network(self, section) -> NetworkSpec:
        if not self.cp.has_section(section):
            raise ScenarioError(f"missing section [{section}]", path=self.path)
        sources, branches, loads = {}, {}, {}
        buses = pcc = None
        for key, text in self.items(section):
            try:
                fields = text.split()
                if key == "buses":
                    buses = int(text)
                elif key == "pcc_bus":
                    pcc = int(text)
                elif key.startswith("source."):
                    if len(fields) not in (2, 3, 5):
                        raise ValueError("expected <bus> <v_ll_rms> [<angle_deg> [<r> <l>]]")
                    nums = [float(f) for f in fields[1:]]
                    r = l = None
                    if len(nums) == 4:
                        r, l = nums[2], nums[3]
                        if r < 0 or l < 0 or (r == 0 and l == 0):
                            raise ValueError("source impedance must be non-negative and non-zero")
                    sources[key[7:]] = SourceSpec(
                        int(fields[0]), nums[0], nums[1] if len(nums) > 1 else 0.0, r, l
                    )
                elif key.startswith("branch."):
                    if len(fields) not in (4, 5):
                        raise ValueError("expected <from> <to> <r> <l> [<c_total>]")
                    nums = [float(f) for f in fields[2:]]
                    if any(n < 0 for n in nums):
                        raise ValueError("branch parameters must be non-negative")
                    branches[key[7:]] = BranchSpec(int(fields[0]), int(fields[1]), *nums)
                elif key.startswith("load."):
                    if len(fields) != 2:
                        raise ValueError("expected <bus> <z_ohms>")
                    z = _parse_complex(fields[1])
                    if z == 0:
                        raise ValueError("load impedance must be non-zero")
                    loads[key[5:]] = (int(fields[0]), z)
                else:
                    raise ValueError(f"unknown key {key!r}")
            except ValueError as exc:
                raise self.error(f"{section}.{key}: {exc}", section, key) from None
        if buses is None:
            raise self.error(f"missing required key 'buses' in [{section}]", section)
        if pcc is None:
            raise self.error(f"missing required key 'pcc_bus' in [{section}]", section)
        if not sources:
            raise self.error(f"[{section}] needs at least one source", section)
        spec = NetworkSpec(buses, pcc, sources, branches, loads)
        for key, bus in (
            [("pcc_bus", pcc)]
            + [(f"source.{n}", s.bus) for n, s in sources.items()]
            + [(f"branch.{n}", b.from_bus) for n, b in branches.items()]
            + [(f"branch.{n}", b.to_bus) for n, b in branches.items()]
            + [(f"load.{n}", b) for n, (b, _) in loads.items()]
        ):
            if not 0 <= bus < buses:
                raise self.error(f"{section}.{key}: bus {bus} out of range 0..{buses - 1}", section, key)
        return spec

    def events(self, networks: dict) -> tuple:
        events = []
        prev = None
        for name, text in self.items("events"):
            try:
                parts = text.split(None, 2)
                if len(parts) != 3:
                    raise ValueError("expected <time> <target> <value>")
                time = parse_quantity(parts[0], "s")
                if time < 0:
                    raise ValueError("event time must be non-negative")
                target, raw = parts[1], parts[2]
                if target in _TARGET_UNITS:
                    value = parse_quantity(raw, _TARGET_UNITS[target])
                    if target == "gsc.v_dc_ref" and not value > 0:
                        raise ValueError("v_dc_ref must be positive")
                else:
                    side, _, rest = target.partition(".load.")
                    if side not in ("grid", "microgrid") or not rest:
                        raise ValueError(f"unknown event target {target!r}")
                    value = _parse_load_value(rest, raw, networks[side])
            except ValueError as exc:
                raise self.error(f"events.{name}: {exc}", "events", name) from None
            if prev is not None and time < prev.time:
                raise self.error(
                    f"event {name!r} at t={time!r} s is out of order after {prev.name!r} at t={prev.time!r} s",
                    "events",
                    name,
                )
            prev = Event(time, target, value, name)
            events.append(prev)
        return tuple(events)


def _parse_load_value(name: str, raw: str, spec: NetworkSpec) -> LoadEvent:
    raw = raw.strip()
    if raw.lower() == "off":
        return LoadEvent(name, None, None)
    bus = None
    if ":" in raw:
        bus_text, raw = raw.split(":", 1)
        bus = int(bus_text)
        if not 0 <= bus < spec.buses:
            raise ValueError(f"bus {bus} out of range")
    elif name in spec.loads:
        bus = spec.loads[name][0]
    else:
        raise ValueError(f"load {name!r} is not declared; give the value as <bus>:<z_ohms>")
    z = _parse_complex(raw)
    if z == 0:
        raise ValueError("load impedance must be non-zero")
    return LoadEvent(name, bus, z)


def parse_text(text: str, *, path=None, name: str = "") -> Scenario:
    rd = _Reader(text, path)
    sim = rd.scalars("simulation")
    ctl = rd.scalars("control")
    dcl = rd.scalars("dclink")
    conv = {s: rd.scalars(s) for s in ("gsc", "msc")}
    grid = rd.network("grid_network")
    micro = rd.network("microgrid_network")
    events = rd.events({"grid": grid, "microgrid": micro})

    omega = 2.0 * math.pi * sim["f_nom"]
    try:
        g, m = conv["gsc"], conv["msc"]
        gsc = ConverterParams(g["r_g"], g["l_g"], g["c_fg"], g["r_fg"], g["l_fg"], g["s_rated"], g["v_ll_rms"], omega)
        msc = ConverterParams(m["r_m"], m["l_m"], m["c_fm"], m["r_fm"], m["l_fm"], m["s_rated"], m["v_ll_rms"], omega)
        common = dict(
            t_f=ctl["t_f"],
            current_limit=ctl["current_limit"],
            min_voltage_fraction=ctl["min_voltage_fraction"],
        )
        gsc_ctl = ControlConfig(
            ControlMode.DC_REGULATION,
            k_p=ctl["k_p"],
            k_i=ctl["k_i"],
            v_dc_ref=ctl["v_dc_ref"],
            q_ref=ctl["gsc_q_ref"],
            **common,
        )
        msc_ctl = ControlConfig(ControlMode.PQ_SETPOINT, p_ref=ctl["msc_p_ref"], q_ref=ctl["msc_q_ref"], **common)
        simulation = SimulationConfig(sim["dt"], sim["t_stop"], sim["log_stride"], sim["init_mode"])
        if not dcl["c_dc"] > 0:
            raise ScenarioError("c_dc must be positive")
        if dcl["v_dc_init"] is not None and not dcl["v_dc_init"] > 0:
            raise ScenarioError("v_dc_init must be positive")
        # Networks must assemble without error.
        grid.build(omega, "grid")
        micro.build(omega, "microgrid")
    except ScenarioError as exc:
        if exc.path is None:
            raise ScenarioError(str(exc), path=path) from None
        raise
    return Scenario(
        grid=grid,
        microgrid=micro,
        gsc=gsc,
        msc=msc,
        gsc_control=gsc_ctl,
        msc_control=msc_ctl,
        c_dc=dcl["c_dc"],
        v_dc_init=dcl["v_dc_init"],
        simulation=simulation,
        events=events,
        f_nom=sim["f_nom"],
        name=name,
    )


def parse_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", path=path) from None
    return parse_text(text, path=path, name=path.stem)


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (``scenario_a``, ``scenario_b``)."""
    stem = name[:-4] if name.endswith(".cfg") else name
    ref = resources.files("btbsim") / "scenarios" / f"{stem}.cfg"
    if not ref.is_file():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return Path(str(ref))


def load_scenario(name_or_path) -> Scenario:
    """Parse a scenario file, falling back to the bundled scenarios by name."""
    p = Path(name_or_path)
    if p.exists():
        return parse_scenario(p)
    return parse_scenario(bundled_scenario_path(str(name_or_path)))


# --- serialization ---------------------------------------------------------


def _num(x: float) -> str:
    return repr(float(x))


def _cplx(z: complex) -> str:
    return repr(complex(z)).strip("()")


def _network_text(section: str, spec: NetworkSpec) -> list[str]:
    lines = [f"[{section}]", f"buses = {spec.buses}", f"pcc_bus = {spec.pcc_bus}"]
    for n, s in spec.sources.items():
        fields = [str(s.bus), _num(s.v_ll_rms), _num(s.angle_deg)]
        if s.r is not None:
            fields += [_num(s.r), _num(s.l)]
        lines.append(f"source.{n} = {' '.join(fields)}")
    for n, b in spec.branches.items():
        lines.append(f"branch.{n} = {b.from_bus} {b.to_bus} {_num(b.r)} {_num(b.l)} {_num(b.c)}")
    for n, (bus, z) in spec.loads.items():
        lines.append(f"load.{n} = {bus} {_cplx(z)}")
    return lines + [""]


def scenario_to_text(sc: Scenario) -> str:
    """Serialize in plain SI units; ``parse_text`` of the result equals ``sc``."""
    sim = sc.simulation
    g, m = sc.gsc, sc.msc
    gc, mc = sc.gsc_control, sc.msc_control
    out = [
        "[simulation]",
        f"dt = {_num(sim.dt)}",
        f"t_stop = {_num(sim.t_stop)}",
        f"log_stride = {sim.log_stride}",
        f"init_mode = {sim.init_mode.value}",
        f"f_nom = {_num(sc.f_nom)}",
        "",
    ]
    out += _network_text("grid_network", sc.grid)
    out += _network_text("microgrid_network", sc.microgrid)
    out += ["[gsc]", f"v_ll_rms = {_num(g.v_ll_rms)}", f"s_rated = {_num(g.s_rated)}", f"r_g = {_num(g.r_g)}",
            f"l_g = {_num(g.l_g)}", f"c_fg = {_num(g.c_f)}", f"r_fg = {_num(g.r_f)}", f"l_fg = {_num(g.l_f)}", ""]
    out += ["[msc]", f"v_ll_rms = {_num(m.v_ll_rms)}", f"s_rated = {_num(m.s_rated)}", f"r_m = {_num(m.r_g)}",
            f"l_m = {_num(m.l_g)}", f"c_fm = {_num(m.c_f)}", f"r_fm = {_num(m.r_f)}", f"l_fm = {_num(m.l_f)}", ""]
    out += ["[dclink]", f"c_dc = {_num(sc.c_dc)}"]
    if sc.v_dc_init is not None:
        out.append(f"v_dc_init = {_num(sc.v_dc_init)}")
    out += [
        "",
        "[control]",
        f"v_dc_ref = {_num(gc.v_dc_ref)}",
        f"k_p = {_num(gc.k_p)}",
        f"k_i = {_num(gc.k_i)}",
        f"t_f = {_num(gc.t_f)}",
        f"gsc_q_ref = {_num(gc.q_ref)}",
        f"msc_p_ref = {_num(mc.p_ref)}",
        f"msc_q_ref = {_num(mc.q_ref)}",
        f"current_limit = {'true' if gc.current_limit else 'false'}",
        f"min_voltage_fraction = {_num(gc.min_voltage_fraction)}",
        "",
        "[events]",
    ]
    for i, ev in enumerate(sc.events):
        name = ev.name or f"event{i}"
        if isinstance(ev.value, LoadEvent):
            value = "off" if ev.value.z is None else f"{ev.value.bus}:{_cplx(ev.value.z)}"
        else:
            value = _num(ev.value)
        out.append(f"{name} = {_num(ev.time)} {ev.target} {value}")
    return "\n".join(out) + "\n"
