"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A run configuration or model parameter is invalid."""


class NumericalError(RuntimeError):
    """A numerical guard tripped (trace drift, degenerate normalization, ...)."""
