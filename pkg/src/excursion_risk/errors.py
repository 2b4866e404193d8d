"""Exception and warning types shared across the package."""


class ExcursionRiskError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(ExcursionRiskError, ValueError):
    """Raised for inputs outside an operation's domain (including net-profit violations)."""


class InvalidBracketError(InvalidParameterError):
    """Raised by root finding when the bracket does not straddle a sign change."""


class NumericalFailure(ExcursionRiskError, ArithmeticError):
    """Raised when a numerical routine cannot deliver the requested accuracy."""


class NonConvergenceError(NumericalFailure):
    pass


class ResolutionTooCoarseError(NumericalFailure):
    pass


class MaxEventsExceeded(NumericalFailure):
    pass


class TruncationWarning(UserWarning):
    """Series truncation left a tail above the requested bound."""


class ClampWarning(UserWarning):
    """A closed-form probability left [0, 1] by more than rounding noise."""
