"""Exception types raised across the package."""


class NNFlowError(Exception):
    """Base class for package errors."""


class DomainError(NNFlowError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class UnsupportedOrderError(NNFlowError, ValueError):
    """Requested derivative order is not implemented."""


class NumericError(NNFlowError, ArithmeticError):
    """A numerical procedure failed to converge."""


class StructuralError(NNFlowError, ValueError):
    """A constitutive law failed the structural audit and cannot be used."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class GridMismatchError(NNFlowError, ValueError):
    """Two fields live on different grids."""


class DegenerateInputError(NNFlowError, ValueError):
    """Input carries no usable information (e.g. every point excluded)."""


class BlowUpError(NNFlowError, RuntimeError):
    """Non-finite values appeared during time integration.

    ``state`` is the last state with finite coefficients and ``series``
    holds the diagnostics gathered up to the failure.
    """

    def __init__(self, message, state=None, series=None):
        super().__init__(message)
        self.state = state
        self.series = series


class ConfigError(NNFlowError, ValueError):
    """Invalid simulation configuration."""
