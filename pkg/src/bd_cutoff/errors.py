"""Exception types raised by the laboratory.

Every error derives from :class:`BeckerDoringError` and from the builtin that
best describes it, so ``except ValueError`` still works for callers that do
not care about the finer categories.
"""

from typing import Optional


class BeckerDoringError(Exception):
    """Base class for all laboratory errors."""


class ParameterError(BeckerDoringError, ValueError):
    """A model or numerical parameter is outside its admissible range."""


class TruncationError(BeckerDoringError, ValueError):
    """The truncation size is too small for the requested computation."""


class SupercriticalError(BeckerDoringError, ValueError):
    """Monomer density or mass at or above the critical value."""


class ConvergenceError(BeckerDoringError, RuntimeError):
    """An iterative procedure did not reach its tolerance."""


class CoordinateError(BeckerDoringError, ValueError):
    """A state vector is in the wrong coordinate form or has the wrong length."""


class SaturationError(BeckerDoringError, ArithmeticError):
    """A weighted sum overflowed double precision."""


class IntegrationError(BeckerDoringError, ArithmeticError):
    """Time integration produced non-finite values."""

    def __init__(self, message: str, last_good_time: Optional[float] = None):
        super().__init__(message)
        self.last_good_time = last_good_time


class StiffnessError(IntegrationError):
    """Step size underflow in the explicit integrator."""


class ConfigError(BeckerDoringError, ValueError):
    """Run configuration is malformed or violates a constraint."""


class ExperimentInvalidError(BeckerDoringError, RuntimeError):
    """An experiment ran but its validity conditions were violated."""
