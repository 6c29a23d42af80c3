"""Exception hierarchy shared across the package."""


class AmelumpError(Exception):
    """Base class for all package errors."""


class ValidationError(AmelumpError):
    """Raised when a model specification is invalid.

    Carries *all* violations found, not just the first one.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class RateSyntaxError(AmelumpError):
    """Raised on a malformed rate expression, with the offending position."""

    def __init__(self, message, position):
        self.position = position
        super().__init__(f"{message} (at position {position})")


class RateEvalError(AmelumpError):
    """Raised when evaluating a rate expression fails (e.g. division by zero)."""


class CapExceededError(AmelumpError):
    """Raised when materializing the neighborhood set would exceed the cap."""


class NumericalError(AmelumpError):
    """Raised when numerical integration fails or produces invalid values."""
