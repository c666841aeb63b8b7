"""Exception types raised across the package."""


class GRFFError(Exception):
    """Base class for all package errors."""


class ShapeError(GRFFError, ValueError):
    """Operand shapes or extents are incompatible."""


class DegenerateBatchError(ShapeError):
    """Batch statistics requested on fewer than two samples."""


class ContractError(GRFFError, RuntimeError):
    """An API precondition was violated (e.g. backward on a non-scalar)."""


class LabelError(GRFFError, ValueError):
    """Labels are outside the allowed set or range."""


class ConfigError(GRFFError, ValueError):
    """Invalid configuration or hyperparameter."""


class ScheduleExhaustedError(ConfigError, IndexError):
    """Epoch index lies beyond the phase schedule."""


class DataError(GRFFError):
    """Base class for problems with input data files."""


class ParseError(DataError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(DataError, ValueError):
    """Binary or text container has the wrong magic/version/layout."""


class ConsistencyError(DataError, ValueError):
    """Two related inputs disagree (e.g. image and label counts)."""


class ChecksumError(DataError):
    """Stored checksum does not match the payload."""


class MigrationError(DataError):
    """Model file was written with an unsupported format version."""


class NumericalError(GRFFError, ArithmeticError):
    """A NaN or infinity appeared during training or evaluation."""
