"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration / usage."""


class NumericError(RuntimeError):
    """Non-finite values encountered during computation."""
