"""Exception hierarchy shared across the pipeline.

Each class maps to a CLI exit code (see cli.py): config 2, data 3, backend 4,
strict not-computable 5.
"""


class RenalCtError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigError(RenalCtError):
    """Invalid configuration or flag combination."""

    exit_code = 2


class DataError(RenalCtError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class BackendError(RenalCtError):
    """Generation backend failure (network, protocol, empty completion)."""

    exit_code = 4


class NotComputableError(RenalCtError):
    """A metric requested in strict mode could not be computed."""

    exit_code = 5
