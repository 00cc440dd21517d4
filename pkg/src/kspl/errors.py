"""Exception types shared across the toolkit."""


class KsplError(Exception):
    """Base class for toolkit errors."""


class ConfigError(KsplError, ValueError):
    """Invalid configuration, architecture or argument shapes."""


class NumericalGuardError(KsplError, ArithmeticError):
    """A numerical guard tripped: non-finite values or training divergence."""


class BudgetExceededError(KsplError):
    """A Monte Carlo request exceeds the configured evaluation cap."""
