"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for toolkit-specific errors."""


class ArgumentError(ToolkitError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(ToolkitError, ValueError):
    """A query point lies outside the domain of the requested operation."""


class NumericError(ToolkitError, ArithmeticError):
    """A numeric result is non-finite or violates a numeric invariant."""


class ConfigError(ToolkitError, ValueError):
    """An experiment configuration is malformed or inconsistent."""
