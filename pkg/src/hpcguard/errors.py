"""Error types shared across the package.

Three failure families matter to callers: malformed input data,
malformed configuration, and numerical divergence during training.
Everything else is a plain bug and stays an ordinary exception.
"""


class DataError(ValueError):
    """Raised when input data (CSV, JSON, dataset contents) is invalid."""


class ConfigError(DataError):
    """Raised when a config file or option set cannot be interpreted."""


class DivergenceError(RuntimeError):
    """Raised when training produces a non-finite loss or weight."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
