"""Exception hierarchy shared across the package.

Every error raised by library code derives from :class:`MdlvaeError` so the
CLI can map failures to a single nonzero exit path.
"""


class MdlvaeError(Exception):
    """Base class for all package errors."""


class ShapeError(MdlvaeError, ValueError):
    """Operands have incompatible or invalid dimensions."""


class DomainError(MdlvaeError, ValueError):
    """An argument is outside the mathematical domain of the operation."""


class UnknownTermError(MdlvaeError, KeyError):
    """A term is missing from an embedding table."""


class ConvergenceError(MdlvaeError, RuntimeError):
    """An iterative kernel failed to converge within its sweep budget."""


class NumericError(MdlvaeError, ArithmeticError):
    """A computation produced a non-finite intermediate value."""


class ParseError(MdlvaeError, ValueError):
    """A file could not be parsed. Carries the offending location."""

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        if row is not None and col is not None:
            message = f"{message} (row {row}, column {col})"
        elif row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row
        self.col = col


class TrainingError(MdlvaeError, RuntimeError):
    """Training diverged or was otherwise aborted. Names the epoch."""

    def __init__(self, message: str, epoch: int | None = None):
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message)
        self.epoch = epoch


class DegenerateDataError(MdlvaeError, ValueError):
    """A statistic is undefined because the inputs carry no variation."""


class ContractError(MdlvaeError, ValueError):
    """A cached trace does not match the model or batch it is used with."""


class ConfigError(MdlvaeError, ValueError):
    """An experiment configuration is invalid or incomplete."""


class NotFittedError(MdlvaeError, ValueError):
    """An estimator method requiring a fitted model was called before fit()."""
