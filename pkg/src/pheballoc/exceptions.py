"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a model or function."""


class ConfigError(ValueError):
    """A configuration value is missing, malformed or inconsistent."""


class RouteFileError(ValueError):
    """A route file could not be parsed or failed validation."""
