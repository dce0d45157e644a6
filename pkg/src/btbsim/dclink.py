"""Shared DC-link capacitor.

Sign convention: ``i_dc_g``/``i_dc_m`` are positive when the capacitor
discharges into the grid-side / microgrid-side converter, so

    C dV/dt = -(i_dc_g + i_dc_m)
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ScenarioError


@dataclass
class DcLinkState:
    v_dc: float
    c_dc: float
    i_dc_g: float = 0.0
    i_dc_m: float = 0.0

    def __post_init__(self):
        if not self.c_dc > 0:
            raise ScenarioError(f"c_dc must be positive, got {self.c_dc!r}")

    def deposit(self, *, i_dc_g: float | None = None, i_dc_m: float | None = None):
        """Record the DC currents reported by the converters."""
        if i_dc_g is not None:
            self.i_dc_g = i_dc_g
        if i_dc_m is not None:
            self.i_dc_m = i_dc_m


def dv_dc_dt(state: DcLinkState) -> float:
    return (-state.i_dc_g - state.i_dc_m) / state.c_dc


def energy(state: DcLinkState) -> float:
    """Stored energy in joules."""
    return 0.5 * state.c_dc * state.v_dc**2
