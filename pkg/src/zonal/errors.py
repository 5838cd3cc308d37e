"""Exception hierarchy shared across the package.

Validation errors signal misuse of an interface (bad arguments, malformed
configs); numerical errors signal a computation that failed or produced a
result outside its contract.  The CLI maps the former to exit code 1 and
the latter to exit code 2.
"""

__all__ = [
    "ZonalError",
    "ValidationError",
    "NumericalError",
    "QuadratureError",
    "NonPsdKernelError",
    "FitError",
]


class ZonalError(Exception):
    """Base class for all package errors."""


class ValidationError(ZonalError, ValueError):
    """Invalid arguments or configuration."""


class NumericalError(ZonalError, RuntimeError):
    """A numerical routine failed or violated its contract."""


class QuadratureError(NumericalError):
    """Gauss node/weight computation did not converge."""


class NonPsdKernelError(NumericalError):
    """A kernel produced an eigenvalue below the negativity tolerance."""


class FitError(NumericalError):
    """A least-squares or constrained fit could not be completed."""
