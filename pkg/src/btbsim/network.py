"""Dense nodal solver for one isolated AC network.

Buses are numbered from zero.  Sources come in two kinds:

* ideal (``z is None``): the bus voltage is fixed to the source EMF and the
  bus is eliminated from the unknowns;
* Norton (``z`` given): admittance ``1/z`` stamped on the diagonal plus an
  injection ``e/z``.

The admittance matrix is always reassembled from the element lists, so
adding and later removing a shunt restores it bit for bit.

Unknowns are solved as deviations from a reference voltage (the first
source EMF).  Branch rows of Y sum to zero, so only the admittances to
ground enter the right-hand side and an unloaded network returns the
source voltage exactly instead of with a condition-number-sized error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NetworkDegenerateError, ScenarioError

#: Reciprocal condition number below which the reduced matrix is rejected.
RCOND_MIN = 1e-12


@dataclass(frozen=True)
class Source:
    bus: int
    e: complex
    z: complex | None = None


@dataclass(frozen=True)
class Branch:
    """Series impedance ``z`` with total shunt susceptance ``b`` split between ends."""

    from_bus: int
    to_bus: int
    z: complex
    b: float = 0.0


@dataclass(frozen=True)
class LoadEvent:
    """Set, replace or remove (``z is None``) the shunt ``name``."""

    name: str
    bus: int | None = None
    z: complex | None = None


class Network:
    def __init__(self, n_bus: int, sources=(), branches=(), name: str = ""):
        if n_bus < 1:
            raise ScenarioError(f"network {name!r} needs at least one bus")
        self.name = name
        self.n_bus = n_bus
        self.sources = list(sources)
        self.branches = list(branches)
        self.shunts: dict[str, tuple[int, complex]] = {}
        self.injections = np.zeros(n_bus, dtype=complex)
        for src in self.sources:
            self._check_bus(src.bus)
            if src.z is not None and src.z == 0:
                raise ScenarioError(f"source at bus {src.bus} has zero impedance; omit z for an ideal source")
        for br in self.branches:
            self._check_bus(br.from_bus)
            self._check_bus(br.to_bus)
            if br.z == 0:
                raise ScenarioError(f"branch {br.from_bus}-{br.to_bus} has zero impedance")
        self._fixed = {}
        for src in self.sources:
            if src.z is None:
                prev = self._fixed.get(src.bus)
                if prev is not None and prev != src.e:
                    raise ScenarioError(f"conflicting ideal sources on bus {src.bus}")
                self._fixed[src.bus] = complex(src.e)
        self._known = np.array(sorted(self._fixed), dtype=int)
        self._unknown = np.array([b for b in range(n_bus) if b not in self._fixed], dtype=int)
        self._v_known = np.array([self._fixed[b] for b in self._known], dtype=complex)
        self._invalidate()

    @property
    def fixed_buses(self) -> frozenset:
        """Buses whose voltage is set by an ideal source."""
        return frozenset(self._fixed)

    def _check_bus(self, bus):
        if not 0 <= bus < self.n_bus:
            raise ScenarioError(f"bus index {bus} out of range for {self.n_bus}-bus network {self.name!r}")

    def _invalidate(self):
        self._y = None
        self._lu = None

    # admittance assembly

    def set_shunt(self, name: str, bus: int, y: complex):
        self._check_bus(bus)
        self.shunts[name] = (bus, complex(y))
        self._invalidate()

    def remove_shunt(self, name: str):
        if name not in self.shunts:
            raise KeyError(f"no shunt named {name!r} in network {self.name!r}")
        del self.shunts[name]
        self._invalidate()

    @property
    def y_matrix(self) -> np.ndarray:
        if self._y is None:
            y = np.zeros((self.n_bus, self.n_bus), dtype=complex)
            for br in self.branches:
                ys = 1.0 / br.z
                i, j = br.from_bus, br.to_bus
                y[i, i] += ys + 0.5j * br.b
                y[j, j] += ys + 0.5j * br.b
                y[i, j] -= ys
                y[j, i] -= ys
            for src in self.sources:
                if src.z is not None:
                    y[src.bus, src.bus] += 1.0 / src.z
            for bus, ys in self.shunts.values():
                y[bus, bus] += ys
            self._y = y
        return self._y

    def source_injections(self) -> np.ndarray:
        inj = np.zeros(self.n_bus, dtype=complex)
        for src in self.sources:
            if src.z is not None:
                inj[src.bus] += src.e * (1.0 / src.z)
        return inj

    def _ground_admittance(self) -> np.ndarray:
        """Row sums of Y, accumulated from the shunt elements alone."""
        g = np.zeros(self.n_bus, dtype=complex)
        for br in self.branches:
            g[br.from_bus] += 0.5j * br.b
            g[br.to_bus] += 0.5j * br.b
        for src in self.sources:
            if src.z is not None:
                g[src.bus] += 1.0 / src.z
        for bus, ys in self.shunts.values():
            g[bus] += ys
        return g

    def _factorize(self):
        u = self._unknown
        y = self.y_matrix
        y_uu = y[np.ix_(u, u)]
        # Fully floating buses make y_uu exactly singular; cond() reports inf.
        rcond = 1.0 / np.linalg.cond(y_uu) if u.size else 1.0
        if not rcond > RCOND_MIN:
            raise NetworkDegenerateError(
                f"network {self.name!r}: admittance matrix near-singular (rcond={rcond:.3g})"
            )
        self._lu = scipy.linalg.lu_factor(y_uu, check_finite=False)
        self._y_uk = y[np.ix_(u, self._known)]
        e_ref = self._v_known[0] if self._known.size else (self.sources[0].e if self.sources else 0j)
        self._e_ref = complex(e_ref)
        # source Norton currents less the ground current at the reference voltage
        self._src_inj = self.source_injections()[u] - self._ground_admittance()[u] * self._e_ref
        self._dv_known = self._y_uk @ (self._v_known - self._e_ref)

    def solve(self, injections: np.ndarray | None = None) -> np.ndarray:
        """Bus voltages (complex, network frame) for the given extra injections.

        ``injections`` defaults to :attr:`injections`; Norton currents of
        sources are always added.
        """
        if self._lu is None:
            self._factorize()
        inj = self.injections if injections is None else injections
        v = np.empty(self.n_bus, dtype=complex)
        v[self._known] = self._v_known
        u = self._unknown
        if u.size:
            rhs = inj[u] + self._src_inj - self._dv_known
            v[u] = self._e_ref + scipy.linalg.lu_solve(self._lu, rhs, check_finite=False)
        return v

    def bus_voltage(self, bus: int) -> complex:
        """Voltage of one bus as a Python complex."""
        fixed = self._fixed.get(bus)
        if fixed is not None:
            return fixed
        return complex(self.solve()[bus])

    def residual(self, v: np.ndarray, injections: np.ndarray | None = None) -> float:
        """Normwise backward error ``|YV - I| / (| |Y||V| | + |I|)`` at the non-fixed buses."""
        inj = self.injections if injections is None else injections
        u = self._unknown
        if not u.size:
            return 0.0
        total = (inj + self.source_injections())[u]
        y_u = self.y_matrix[u, :]
        r = y_u @ v - total
        scale = np.linalg.norm(np.abs(y_u) @ np.abs(v)) + np.linalg.norm(total)
        return float(np.linalg.norm(r) / scale) if scale > 0 else 0.0


def update_admittance(net: Network, event: LoadEvent) -> Network:
    """Apply a constant-impedance load change in place and return ``net``."""
    if event.z is None:
        net.remove_shunt(event.name)
        return net
    if event.z == 0:
        raise ScenarioError(f"load {event.name!r} has zero impedance")
    bus = event.bus
    if bus is None:
        if event.name not in net.shunts:
            raise ScenarioError(f"load {event.name!r} needs a bus on first use")
        bus = net.shunts[event.name][0]
    net.set_shunt(event.name, bus, 1.0 / event.z)
    return net
