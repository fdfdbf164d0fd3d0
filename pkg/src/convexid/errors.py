"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid loss, schedule, kernel or experiment parameters."""


class ArgumentError(ValueError):
    """Arguments with mismatched dimensions or out-of-range values."""


class DataError(ValueError):
    """Observations that cannot be used (non-finite values, bad CSV)."""


class NumericalError(ArithmeticError):
    """A linear system that could not be solved reliably."""
