"""Exception types raised across the package."""


class DladError(Exception):
    """Base class for all package errors."""


class ShapeError(DladError, ValueError):
    """Array dimensions do not match what an operation expects."""


class NotStochasticError(DladError, ValueError):
    """A row expected to be a probability vector is not one."""


class FormatError(DladError, ValueError):
    """A file does not follow the expected binary or text layout."""


class DataError(DladError, ValueError):
    """File layout is fine but the contents are invalid (bad label, empty split...)."""


class TrainingDivergedError(DladError, RuntimeError):
    """Loss became non-finite or exploded during training."""

    def __init__(self, what, epoch, loss):
        self.what = what
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"{what}: training diverged at epoch {epoch} (loss={loss!r})")


class ConfigError(DladError, ValueError):
    """Invalid experiment configuration, optionally tied to a file line."""

    def __init__(self, message, *, field=None, line=None, path=None):
        self.field = field
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        if where:
            where += " "
        super().__init__(f"{where}{message}")
