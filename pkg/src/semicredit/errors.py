"""Exception types shared across the toolkit."""


class ContractError(ValueError):
    """An argument violates a documented precondition."""


class DimensionError(ContractError):
    """Array shapes are incompatible with the requested operation."""


class GradientError(RuntimeError):
    """A gradient is non-finite; the optimizer refused to apply it."""


class EnumerationLimitError(RuntimeError):
    """Exact coalition enumeration was requested above the player limit."""


class ConfigError(ValueError):
    """A configuration file or override is malformed."""


class TrainAbort(RuntimeError):
    """Training stopped early, after flushing diagnostics for the failed iteration."""
