"""Shared exception types."""


class EarlError(Exception):
    pass


class DomainError(EarlError, ValueError):
    """An argument is outside the documented domain of an operation."""


class ConfigError(EarlError, ValueError):
    """A configuration value violates its invariants."""


class DegenerateGroup(EarlError):
    """A rollout group has (near-)zero reward spread; the caller should have
    filtered it out before asking for normalized advantages."""
