"""Exception types shared across the package."""


class FormatError(ValueError):
    """An input file does not match its documented format."""


class ConfigError(ValueError):
    """A parameter set or run configuration is invalid."""
