"""Exception hierarchy shared by all solver modules.

Validation-type errors (bad input, bad config) map to CLI exit code 2,
numerical failures to exit code 3 and I/O failures to exit code 4.
"""

from __future__ import annotations


class SwlwError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(SwlwError, ValueError):
    """Input or configuration violates a stated constraint.

    Carries the full list of violations so callers can report all of them.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DomainError(ValidationError):
    """Argument outside the domain of a constitutive or kernel function."""


class RangeError(ValidationError):
    """Query point outside the range covered by a map or grid."""


class ShapeError(ValidationError):
    """Array shape does not match the expected node or mode count."""


class UnsupportedError(ValidationError):
    """Requested regime is not supported (e.g. gamma > 3 without the flag)."""


class StepSizeError(ValidationError):
    """Time step violates a hard stability (CFL) bound."""


class NumericalError(SwlwError, RuntimeError):
    """A computation failed numerically."""


class PositivityError(NumericalError):
    """A field that must stay positive fell below its floor."""

    def __init__(self, field: str, location: float, t: float, value: float | None = None):
        self.field = field
        self.location = float(location)
        self.t = float(t)
        self.value = value
        msg = f"{field} below floor at y={self.location:.6g}, t={self.t:.6g}"
        if value is not None:
            msg += f" (value {value:.6g})"
        super().__init__(msg)


class VacuumError(PositivityError):
    """Density reached vacuum where the mass coordinate is undefined."""

    def __init__(self, location: float, value: float, t: float = float("nan")):
        super().__init__("rho", location, t, value)


class DivergenceError(NumericalError):
    """NaN or Inf detected in a field."""

    def __init__(self, field: str, t: float = float("nan")):
        self.field = field
        self.t = t
        super().__init__(f"non-finite values in {field} at t={t:.6g}")


class AccuracyError(NumericalError):
    """Quadrature or iteration failed its own convergence check."""


class LinearSolveError(NumericalError):
    """A linear solve failed (singular or non-finite system)."""


class IOFailure(SwlwError, OSError):
    """Reading or writing an artifact failed; message names the path."""
