"""Exception types shared across the package."""


class MarError(Exception):
    """Base class for all errors raised by maskmar."""


class ConfigError(MarError, ValueError):
    """Invalid configuration: shapes, layer specs, config files."""


class UsageError(MarError, ValueError):
    """A function was called with arguments that violate its contract."""


class NumericalError(MarError, ArithmeticError):
    """NaN or Inf appeared in a forward or backward pass."""


class QualityWarning(UserWarning):
    """A result was produced but its quality is degraded (too few views, fallback paths)."""
