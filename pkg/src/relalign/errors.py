"""Exception types; each maps to a CLI exit code."""


class RelalignError(Exception):
    exit_code = 1


class ConfigError(RelalignError):
    exit_code = 2


class DataError(RelalignError):
    exit_code = 3


class NumericError(RelalignError):
    """A loss or parameter became non-finite."""

    exit_code = 4
