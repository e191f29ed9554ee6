"""Python bindings for the tdflow library."""

from ._tdflow import (
    ConfigError,
    IoError,
    NumericError,
    bellman_apply,
    commands,
    emd,
    run,
    successor_measure,
    validate_config,
    value,
    version,
)

__all__ = [
    "ConfigError",
    "IoError",
    "NumericError",
    "bellman_apply",
    "commands",
    "emd",
    "run",
    "successor_measure",
    "validate_config",
    "value",
    "version",
]
__version__ = version()
