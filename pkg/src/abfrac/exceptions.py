"""Exception hierarchy shared by every module."""


class AbfracError(Exception):
    """Base class for all package errors."""


class DomainError(AbfracError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class OutOfWindowError(DomainError):
    """A kernel was evaluated beyond its verification horizon."""


class SingularityError(DomainError):
    """Evaluation requested at a kernel singularity."""


class WrongSolverError(DomainError):
    """A closed-form solver was called outside its parameter regime."""


class PreconditionError(DomainError):
    """A hypothesis required by a check does not hold for the input."""


class ConfigError(AbfracError, ValueError):
    """Inconsistent configuration or scenario construction failure."""


class ResolutionError(AbfracError, ValueError):
    """A grid cannot resolve the requested region."""


class DataError(AbfracError, ValueError):
    """Sampled data is malformed or cannot be interpolated."""


class AccuracyError(AbfracError, ArithmeticError):
    """A numerical method did not reach the requested tolerance.

    Attributes
    ----------
    estimate : float
        Best value obtained before giving up.
    error : float
        Estimated error of ``estimate``.
    """

    def __init__(self, message, estimate=float("nan"), error=float("inf")):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class MLOverflowError(AbfracError, OverflowError):
    """Mittag-Leffler value exceeds the double range for positive arguments."""

    def __init__(self, message, threshold):
        super().__init__(message)
        self.threshold = threshold


class SolverError(AbfracError, ArithmeticError):
    """The linear solve of a time step failed."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual
