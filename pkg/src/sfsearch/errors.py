"""Error taxonomy shared across the package.

The CLI maps each class to a distinct process exit code, so library code
should raise the most specific one that applies.
"""


class ConfigError(Exception):
    """Invalid configuration, unknown keys, or unusable argument values."""

    exit_code = 1


class DataError(Exception):
    """Malformed or inconsistent input data (datasets, checkpoints)."""

    exit_code = 2


class NumericalError(Exception):
    """Non-finite values or numerically unusable intermediate state."""

    exit_code = 3
