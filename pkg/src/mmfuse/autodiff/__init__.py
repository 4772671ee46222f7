"""Minimal dense-tensor engine with reverse-mode differentiation."""

from .tensor import (
    AutodiffError,
    ShapeMismatch,
    Tensor,
    UnknownPrimitive,
    as_tensor,
    backward,
)
from . import ops
from .ops import BatchNormState, PRIMITIVES, eval_primitive
from .optim import AdamState, adam_step
from .gradcheck import check_gradients
from .checkpoint import CheckpointError, MAGIC, file_sha256, load_arrays, save_arrays

__all__ = [
    "AutodiffError",
    "ShapeMismatch",
    "Tensor",
    "UnknownPrimitive",
    "as_tensor",
    "backward",
    "ops",
    "BatchNormState",
    "PRIMITIVES",
    "eval_primitive",
    "AdamState",
    "adam_step",
    "check_gradients",
    "CheckpointError",
    "MAGIC",
    "file_sha256",
    "load_arrays",
    "save_arrays",
]
