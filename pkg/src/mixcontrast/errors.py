"""Exception hierarchy.

Data problems and numerical failures are kept apart so the command line
can map them to distinct exit codes.
"""


class MixContrastError(Exception):
    """Base class for all package errors."""


class DataError(MixContrastError, ValueError):
    """Malformed or inconsistent input data."""


class ParameterDomainError(MixContrastError, ValueError):
    """A model parameter lies outside its admissible domain."""


class NumericalError(MixContrastError, ArithmeticError):
    """A computation failed numerically (non-finite values, divergence)."""


class ConditioningError(NumericalError):
    """A matrix that must be positive definite is not."""


class InitializationError(NumericalError):
    """EM starting values could not be constructed."""
