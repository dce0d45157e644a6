"""Exception hierarchy.

Model errors carry the simulation time at which they occurred (``t``) and,
when raised out of a time loop, the partial log up to the failure point.
"""

from __future__ import annotations


class BtbError(Exception):
    """Base class for all package errors."""


class ScenarioError(BtbError):
    """Invalid scenario file or scenario object."""

    def __init__(self, message, *, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        loc = ""
        if path is not None:
            loc = str(path)
        if line is not None:
            loc += f":{line}"
            if column is not None:
                loc += f":{column}"
        super().__init__(f"{loc}: {message}" if loc else message)


class ModelError(BtbError):
    """Numerical or physical failure while evaluating the model."""

    def __init__(self, message, *, t=None):
        self.t = t
        self.log = None
        super().__init__(message)

    def __str__(self):
        msg = super().__str__()
        if self.t is not None:
            return f"t={self.t:.6f} s: {msg}"
        return msg


class SingularEquivalentError(ModelError, ValueError):
    """Thevenin impedance is zero, so no Norton equivalent exists."""


class FrameMismatchError(ValueError):
    """Two dq quantities expressed in different frames were combined."""


class DeadBusError(ModelError):
    """PCC voltage is zero; the PLL has nothing to lock to."""


class LowVoltageError(ModelError):
    """PCC d-axis voltage below the reference-current guard threshold."""


class DcLinkCollapseError(ModelError):
    """DC-link voltage reached zero or went negative."""


class NetworkDegenerateError(ModelError):
    """Admittance matrix singular or too ill-conditioned to solve."""


class DivergenceError(ModelError):
    """A state became non-finite. ``last_good`` holds the previous state."""

    def __init__(self, message, *, t=None, last_good=None):
        super().__init__(message, t=t)
        self.last_good = last_good


class InitializationError(ModelError):
    """Equilibrium initialization failed to converge."""


class ConvergenceError(ModelError):
    """Iterative steady-state solve failed to converge."""
