"""Exception types shared across the package.

Each stage raises a specific subclass so the CLI can map data problems to
exit code 2 and numeric failures to exit code 3 without string matching.
"""


class ScreenCleanError(Exception):
    """Base class for all package errors."""


class DataError(ScreenCleanError):
    """Invalid or unusable input data / configuration."""


class NumericError(ScreenCleanError):
    """A numeric procedure failed (singularity, non-convergence, ...)."""


class ConstantColumnError(DataError):
    """A covariate column has zero sample variance."""

    def __init__(self, column: int, name: str | None = None):
        self.column = column
        self.name = name
        label = f"column {column}" if name is None else f"column {column} ({name!r})"
        super().__init__(f"constant covariate: {label} has zero sample variance")


class TooFewRowsError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


class NotSymmetricError(DataError):
    pass


class TooManySubsetsError(DataError):
    """Exhaustive subset enumeration would exceed the configured budget."""


class ModelTooLargeError(DataError):
    """Requested model has at least as many variables as rows."""


class SingularGramError(NumericError):
    """Smallest eigenvalue of the scaled Gram matrix fell below tolerance."""

    def __init__(self, message: str, smallest: float | None = None):
        super().__init__(message)
        self.smallest = smallest


class ZeroResidualVarianceError(NumericError):
    """Perfect fit: residual variance is zero, t-statistics undefined."""


class ConvergenceError(NumericError):
    """Iterative solver hit its sweep budget before meeting tolerance."""

    def __init__(self, message: str, kkt_residual: float | None = None):
        super().__init__(message)
        self.kkt_residual = kkt_residual


class EmptyPathError(DataError):
    """A screen path with no usable entries was handed to selection."""


class EmptyModelError(DataError):
    """A critical value was requested for an empty screened set."""


class EmptyPilotError(DataError):
    """All pilot coefficients are zero; the weighted problem is empty."""


class CriticalValueDomainError(DataError):
    """Critical-value formula evaluated outside its domain (log log n <= 0)."""
