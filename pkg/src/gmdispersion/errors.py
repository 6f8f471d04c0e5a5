"""Exception types shared across the package."""


class GMDispersionError(Exception):
    """Base class for all package errors."""


class DomainError(GMDispersionError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class DegenerateInputError(DomainError):
    """The input makes a ratio or estimator undefined (e.g. a zero denominator)."""


class ConfigurationError(GMDispersionError, ValueError):
    """A requested experiment exceeds a configured budget or is malformed."""


class ConvergenceError(GMDispersionError, ArithmeticError):
    """A numerical routine failed to reach its tolerance.

    ``diagnostics`` carries whatever the routine knew when it gave up.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
