class CaradjError(Exception):
    """Base class for package errors."""


class ValidationError(CaradjError, ValueError):
    """Malformed input: bad file, bad column, bad parameter."""


class DegenerateStratumError(CaradjError, ValueError):
    """A stratum cannot support the requested estimator (e.g. an empty arm)."""

    def __init__(self, message: str, stratum=None):
        super().__init__(message)
        self.stratum = stratum


class SingularUpdateError(CaradjError, ArithmeticError):
    """Rank-one update whose denominator is numerically zero."""
