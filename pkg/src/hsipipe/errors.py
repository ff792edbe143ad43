"""Exception hierarchy shared by all pipeline stages.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericError -> 3.
"""


class HsipipeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(HsipipeError):
    """Invalid or inconsistent configuration / parameters."""


class DataError(HsipipeError):
    """Malformed files, shape mismatches, contract violations on inputs."""


class NumericError(HsipipeError):
    """Numerical failure: non-convergence, degenerate matrices, non-finite values."""


class StageError(HsipipeError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause
