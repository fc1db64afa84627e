"""Exception types shared across the package."""


class STSSError(Exception):
    """Base class for all package errors."""


class ContractError(STSSError):
    """An operation was called with arguments violating its contract."""


class NonFiniteError(STSSError):
    """A NaN or Inf appeared where only finite values are allowed."""


class InsufficientHistoryError(ContractError):
    """A frame index has fewer than the required warm-up frames behind it."""


class ConfigError(STSSError):
    """A configuration file or config object is invalid."""
