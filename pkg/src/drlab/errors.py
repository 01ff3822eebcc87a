"""Semantic exception hierarchy for drlab."""


class DrlabError(Exception):
    """Base class for all drlab errors."""


class DomainError(DrlabError, ValueError):
    """A function was evaluated outside its domain."""


class NumericError(DrlabError, RuntimeError):
    """A numerical routine failed to produce a usable result."""


class ConfigError(DrlabError, ValueError):
    """A run configuration is malformed or inconsistent."""
