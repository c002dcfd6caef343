from .errors import (
    SDTError,
    DimensionError,
    ConfigError,
    UsageError,
    CapacityError,
    NumericalError,
    DatasetError,
    TrainingAborted,
)
from .tensor import Tensor, Parameter, no_grad, is_grad_enabled, as_tensor
from . import ops
from .optim import Adam, AdamState, adam_step
from .rng import make_rng, make_streams, split

__all__ = [
    "SDTError",
    "DimensionError",
    "ConfigError",
    "UsageError",
    "CapacityError",
    "NumericalError",
    "DatasetError",
    "TrainingAborted",
    "Tensor",
    "Parameter",
    "no_grad",
    "is_grad_enabled",
    "as_tensor",
    "ops",
    "Adam",
    "AdamState",
    "adam_step",
    "make_rng",
    "make_streams",
    "split",
]
