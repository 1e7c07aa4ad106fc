"""Numerical core: tensors with reverse-mode autodiff, network layers,
Adam, gradient checking, and parameter checkpoints."""

from .checkpoint import BadCheckpoint, load_tensors, save_tensors
from .nn import (
    ACTIVATIONS,
    BatchNormState,
    BatchTooSmall,
    EmptyInput,
    InvalidRate,
    WindowTooLarge,
    batch_norm,
    bce_with_logits,
    conv_bank,
    conv_window,
    dropout,
    masked_max,
    max_pool,
    relu,
    sigmoid,
    tanh,
)
from .optim import AdamState, GradCheckReport, adam_step, grad_check
from .tensor import (
    NonFiniteValue,
    NotScalarLoss,
    ShapeMismatch,
    Tensor,
    concat,
    embedding,
    set_finite_checks,
    unfold_windows,
)

__all__ = [
    "ACTIVATIONS",
    "AdamState",
    "BadCheckpoint",
    "BatchNormState",
    "BatchTooSmall",
    "EmptyInput",
    "GradCheckReport",
    "InvalidRate",
    "NonFiniteValue",
    "NotScalarLoss",
    "ShapeMismatch",
    "Tensor",
    "WindowTooLarge",
    "adam_step",
    "batch_norm",
    "bce_with_logits",
    "concat",
    "conv_bank",
    "conv_window",
    "dropout",
    "embedding",
    "grad_check",
    "load_tensors",
    "masked_max",
    "max_pool",
    "relu",
    "save_tensors",
    "set_finite_checks",
    "sigmoid",
    "tanh",
    "unfold_windows",
]
