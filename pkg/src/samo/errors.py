"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Bad shapes, unknown names, out-of-range settings."""


class DomainError(ValueError):
    """An argument lies outside the domain of a density or transform."""


class UsageError(RuntimeError):
    """An object was driven in an invalid order (e.g. stepping a finished episode)."""
