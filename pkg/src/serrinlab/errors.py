"""Exception types shared across the package."""


class SerrinLabError(Exception):
    """Base class for all package errors."""


class InvalidDomainError(SerrinLabError, ValueError):
    """The radius function is non-positive somewhere, or the domain config is malformed."""


class ParameterError(SerrinLabError, ValueError):
    """Exponent/dimension/argument outside the range a formula supports."""


class ConfigError(SerrinLabError, ValueError):
    """A solver or CLI configuration is inconsistent with the requested run."""


class SolverError(SerrinLabError, RuntimeError):
    """Hard failure of a linear solve (singular or indefinite system)."""


class UnconvergedError(SerrinLabError, RuntimeError):
    """A diagnostic was asked to run on a result that did not converge."""
