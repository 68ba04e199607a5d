"""Exception types raised across the package."""


class OstailError(Exception):
    """Base class for all package errors."""


class DomainError(OstailError, ValueError):
    """An argument lies outside the domain of an operation."""


class UnsupportedFamilyError(DomainError):
    """The estimator or transform does not support this distribution family."""


class PreconditionError(DomainError):
    """Inputs are valid in isolation but violate an estimator precondition."""


class ConfigError(DomainError):
    """Experiment configuration is invalid. ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class NumericalError(OstailError, ArithmeticError):
    """A numerical routine failed to converge or produced a non-finite value."""


class IterationCapError(NumericalError):
    """An iterative sampler or solver exceeded its iteration budget."""


class VerificationError(OstailError):
    """Reproduced values disagree with a reference beyond tolerance."""
