"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Unknown environment/agent names or out-of-range settings."""


class UsageError(ValueError):
    """An operation was called with arguments that break its contract."""


class GenerationError(RuntimeError):
    """A procedural layout could not be produced within the retry bound."""


class NumericError(ArithmeticError):
    """A loss or gradient became non-finite."""
