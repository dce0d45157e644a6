"""Phasor quantities, frame transforms and power conventions.

Conventions used throughout the package:

* dq components are **amplitude invariant**: ``d`` and ``q`` are peak phase
  values, and three-phase power is ``3/2 (v_d i_d + v_q i_q)``.  Feeding RMS
  quantities into these functions silently scales every power by 1.5.
* Converter currents are positive when flowing out of the converter into
  its AC network, so ``p > 0`` means the converter exports active power.
* Reactive power is ``q = 3/2 (v_q i_d - v_d i_q)``, the imaginary part of
  ``3/2 V conj(I)``.  ``q > 0`` means the converter injects inductive vars.
* Network-frame phasors are stored rectangular; the converter frame is
  rotated by ``frame_angle`` from the network real axis.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

from .errors import FrameMismatchError, SingularEquivalentError

#: Peak phase voltage per volt of line-to-line RMS.
LL_RMS_TO_PEAK = math.sqrt(2.0 / 3.0)


@dataclass(frozen=True, slots=True)
class Phasor:
    """Complex quantity in a network frame (volts or amperes)."""

    re: float
    im: float = 0.0

    @classmethod
    def from_complex(cls, z: complex) -> Phasor:
        return cls(z.real, z.imag)

    @classmethod
    def from_polar(cls, magnitude: float, angle: float) -> Phasor:
        return cls(magnitude * math.cos(angle), magnitude * math.sin(angle))

    def magnitude(self) -> float:
        return math.hypot(self.re, self.im)

    def angle(self) -> float:
        """Angle in (-pi, pi]."""
        a = math.atan2(self.im, self.re)
        return math.pi if a == -math.pi else a

    def __complex__(self) -> complex:
        return complex(self.re, self.im)


@dataclass(frozen=True, slots=True)
class DqPair:
    """d/q components in a converter frame at ``frame_angle`` radians."""

    d: float
    q: float
    frame_angle: float = 0.0

    def as_complex(self) -> complex:
        return complex(self.d, self.q)


def to_dq(v: Phasor, frame_angle: float) -> DqPair:
    """Express a network-frame phasor in the frame rotated by ``frame_angle``."""
    c = math.cos(frame_angle)
    s = math.sin(frame_angle)
    return DqPair(v.re * c + v.im * s, v.im * c - v.re * s, frame_angle)


def from_dq(x: DqPair) -> Phasor:
    """Inverse of :func:`to_dq`."""
    c = math.cos(x.frame_angle)
    s = math.sin(x.frame_angle)
    return Phasor(x.d * c - x.q * s, x.d * s + x.q * c)


def thevenin_to_norton(e_source: Phasor, z: complex) -> Phasor:
    """Norton current ``e_source / z`` of a source behind impedance ``z``."""
    if z == 0:
        raise SingularEquivalentError("zero source impedance has no Norton equivalent")
    return Phasor.from_complex(complex(e_source) / z)


@dataclass(frozen=True)
class SourceEquivalent:
    """Voltage source behind an impedance, with its Norton current."""

    e_source: Phasor
    z: complex
    i_norton: Phasor = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "i_norton", thevenin_to_norton(self.e_source, self.z))

    def terminal_current(self, v_terminal: Phasor) -> Phasor:
        """Current delivered into a terminal held at ``v_terminal``."""
        return Phasor.from_complex(complex(self.i_norton) - complex(v_terminal) / self.z)


def three_phase_power(v: DqPair, i: DqPair) -> tuple[float, float]:
    """Active and reactive three-phase power from amplitude-invariant dq values."""
    if v.frame_angle != i.frame_angle:
        raise FrameMismatchError(
            f"voltage frame {v.frame_angle!r} != current frame {i.frame_angle!r}"
        )
    p = 1.5 * (v.d * i.d + v.q * i.q)
    q = 1.5 * (v.q * i.d - v.d * i.q)
    return p, q


def rotate(z: complex, angle: float) -> complex:
    """Rotate a complex value by ``angle`` radians."""
    return z * cmath.exp(1j * angle)
