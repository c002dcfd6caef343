"""
Exception hierarchy for the SDT library.
Every error raised on purpose by the package derives from SDTError so that the
CLI and the API can catch a single type at their boundary.
"""
from typing import Optional


class SDTError(Exception):
    """Base class for all SDT errors."""


class DimensionError(SDTError, ValueError):
    """Shapes of operands do not agree."""


class ConfigError(SDTError, ValueError):
    """A hyperparameter or option is outside its valid range."""


class UsageError(SDTError, RuntimeError):
    """An API was called in an invalid state (e.g. backward on a non-scalar)."""


class CapacityError(SDTError, ValueError):
    """A fixed-size table was asked for more rows than it holds."""


class NumericalError(SDTError, ArithmeticError):
    """An operation produced NaN or Inf."""

    def __init__(self, op: str, message: Optional[str] = None):
        self.op = op
        super().__init__(message or f"non-finite values produced by '{op}'")


class DatasetError(SDTError, ValueError):
    """A dataset file is malformed. `record` is the offending conversation index."""

    def __init__(self, message: str, record: Optional[int] = None):
        self.record = record
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)


class TrainingAborted(SDTError):
    """Training hit a non-finite loss."""

    def __init__(self, epoch: int, batch: int, component: str):
        self.epoch = epoch
        self.batch = batch
        self.component = component
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch} (component: {component})")
