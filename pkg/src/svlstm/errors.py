"""Exception hierarchy shared across the package.

The CLI maps each family onto an exit code: ConfigError -> 1, DataError -> 2,
NumericError -> 3.
"""


class SvLstmError(Exception):
    """Base class for all package errors."""


class ConfigError(SvLstmError):
    """Invalid configuration or arguments."""


class DataError(SvLstmError):
    """Malformed, missing or inconsistent input data."""


class NumericError(SvLstmError):
    """A numerical procedure failed or its result is undefined."""


class DegenerateError(NumericError):
    """The requested quantity is undefined for this input (zero variance, no information)."""


class TrainingDivergedError(NumericError):
    def __init__(self, epoch: int, message: str = "non-finite loss"):
        super().__init__(f"training diverged at epoch {epoch}: {message}")
        self.epoch = epoch
