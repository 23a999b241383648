"""Exception types raised across the package."""


class NSLabError(Exception):
    """Base class for all package errors."""


class SymmetryError(NSLabError, ValueError):
    """Coefficients of a real field are not Hermitian-symmetric."""


class DomainError(NSLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class GridMismatchError(NSLabError, ValueError):
    """Two fields live on different grids."""


class IntervalError(NSLabError, ValueError):
    """A trajectory does not cover the requested time interval."""


class WindowError(NSLabError, ValueError):
    """A dyadic index lies outside the configured window."""


class SupportError(NSLabError, ValueError):
    """Fourier support precondition violated."""


class ResolutionError(NSLabError, ValueError):
    """The grid is too coarse for the requested localization."""


class ConfigError(NSLabError, ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class NotDivergenceFreeError(NSLabError, ValueError):
    """Initial data fails the divergence-free check."""


class NumericalDivergenceError(NSLabError, ArithmeticError):
    """An iteration produced non-finite values.

    ``records`` holds whatever finite diagnostics were collected before the
    failure.
    """

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = list(records or [])
