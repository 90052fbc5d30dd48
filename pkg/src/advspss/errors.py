class ConfigError(ValueError):
    """Inconsistent shapes, dimensions or settings."""


class UsageError(ValueError):
    """Invalid call order or arguments (maps to CLI exit code 2)."""


class NumericalError(ArithmeticError):
    """Singular systems or non-finite losses during training."""
