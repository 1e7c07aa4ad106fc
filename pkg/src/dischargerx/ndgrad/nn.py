"""Network building blocks: activations, convolution, pooling, batch norm,
dropout and the binary cross-entropy loss.

Everything here is expressed over the autodiff Tensor, so gradients come
out of the tape; only max pooling and the loss carry hand-written backward
rules (both have trivially verifiable one-hot / sigmoid-difference forms).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeMismatch, Tensor, unfold_windows


class WindowTooLarge(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class InvalidRate(ValueError):
    pass


class BatchTooSmall(ValueError):
    pass


# -- activations --------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    keep = (x.data > 0).astype(np.float64)
    return Tensor._result(x.data * keep, (x,), lambda g: (g * keep,))


def sigmoid(x: Tensor) -> Tensor:
    # Piecewise form avoids overflow in exp for large |x|.
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    e = np.exp(x.data[~pos])
    out[~pos] = e / (1.0 + e)
    return Tensor._result(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor._result(out, (x,), lambda g: (g * (1.0 - out**2),))


ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh, "identity": lambda x: x}


# -- convolution and pooling ---------------------------------------------------


def conv_window(note: Tensor, filt: Tensor, bias, act=relu) -> Tensor:
    """Slide one [n, h] filter over an [l, h] note matrix.

    Output i is act(<filt, note[i:i+n]> + bias) where <,> is the matrix
    inner product (sum of the elementwise product), one value per window
    position.
    """
    if note.data.ndim != 2 or filt.data.ndim != 2:
        raise ShapeMismatch("conv_window expects 2-D note and filter")
    length, width = note.shape
    window, fwidth = filt.shape
    if width != fwidth:
        raise ShapeMismatch(f"embedding widths differ: {width} vs {fwidth}")
    if window > length:
        raise WindowTooLarge(f"filter window {window} exceeds note length {length}")
    windows = unfold_windows(note, window)
    scores = windows @ filt.reshape(window * width, 1)
    bias = bias if isinstance(bias, Tensor) else Tensor(bias)
    return act((scores + bias).reshape(length - window + 1))


def conv_bank(windows: Tensor, filters: Tensor, bias: Tensor) -> Tensor:
    """Apply a whole filter bank to pre-unfolded windows.

    ``windows`` is [rows, n*h] from unfold_windows, ``filters`` [n*h, f],
    ``bias`` [f]; returns the [rows, f] pre-activation scores (batch norm
    and the nonlinearity are applied by the caller).
    """
    return windows @ filters + bias.reshape(1, filters.shape[1])


def max_pool(values: Tensor) -> tuple[Tensor, int]:
    """Maximum of a 1-D tensor plus its argmax (ties take the lowest index).

    The backward rule routes the whole upstream gradient to the argmax.
    """
    if values.data.ndim != 1:
        raise ShapeMismatch("max_pool expects a 1-D tensor")
    if values.size == 0:
        raise EmptyInput("max_pool over empty input")
    index = int(np.argmax(values.data))

    def backward(g):
        grad = np.zeros_like(values.data)
        grad[index] = g
        return (grad,)

    return Tensor._result(values.data[index], (values,), backward), index


def masked_max(values: Tensor, mask: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Per-example, per-feature maximum over valid positions.

    ``values`` is [batch, positions, features]; ``mask`` is a boolean
    [batch, positions] marking which positions may participate (padding
    windows are excluded).  Returns a [batch, features] tensor and the
    integer argmax positions.  Every example needs at least one valid
    position.
    """
    if values.data.ndim != 3:
        raise ShapeMismatch("masked_max expects [batch, positions, features]")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != values.shape[:2]:
        raise ShapeMismatch(f"mask shape {mask.shape} does not match {values.shape[:2]}")
    if not mask.any(axis=1).all():
        raise EmptyInput("an example has no valid positions to pool over")
    filled = np.where(mask[:, :, None], values.data, -np.inf)
    argmax = np.argmax(filled, axis=1)
    batch_idx = np.arange(values.shape[0])[:, None]
    feat_idx = np.arange(values.shape[2])[None, :]
    pooled = values.data[batch_idx, argmax, feat_idx]

    def backward(g):
        grad = np.zeros_like(values.data)
        np.add.at(grad, (batch_idx, argmax, feat_idx), g)
        return (grad,)

    return Tensor._result(pooled, (values,), backward), argmax


# -- regularization layers -----------------------------------------------------


def dropout(x: Tensor, keep_rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: kept entries are scaled by 1/keep_rate at train
    time so inference is the identity."""
    if not 0.0 < keep_rate <= 1.0:
        raise InvalidRate(f"keep_rate must be in (0, 1], got {keep_rate}")
    if not training or keep_rate == 1.0:
        return x
    mask = (rng.random(x.shape) < keep_rate) / keep_rate
    return x * Tensor(mask)


@dataclass
class BatchNormState:
    """Learnable scale/shift plus running statistics for one feature axis."""

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5
    batches_seen: int = field(default=0)

    @classmethod
    def create(cls, features: int, momentum: float = 0.9, eps: float = 1e-5) -> "BatchNormState":
        return cls(
            gamma=Tensor(np.ones(features), requires_grad=True),
            beta=Tensor(np.zeros(features), requires_grad=True),
            running_mean=np.zeros(features),
            running_var=np.ones(features),
            momentum=momentum,
            eps=eps,
        )


def batch_norm(
    x: Tensor,
    state: BatchNormState,
    training: bool,
    mask: np.ndarray | None = None,
) -> Tensor:
    """Normalize [rows, features] per feature, then scale and shift.

    In training mode statistics come from the rows the boolean ``mask``
    marks valid (all rows when mask is None) and the running statistics
    are updated as a side effect; rows outside the mask are still
    transformed so callers can keep rectangular shapes, but they carry no
    gradient into the statistics.  Inference normalizes with the stored
    running statistics only.
    """
    if x.data.ndim != 2:
        raise ShapeMismatch("batch_norm expects [rows, features]")
    if not training:
        scale = state.gamma * Tensor(1.0 / np.sqrt(state.running_var + state.eps))
        return x * scale.reshape(1, -1) + (
            state.beta - state.gamma * Tensor(state.running_mean / np.sqrt(state.running_var + state.eps))
        ).reshape(1, -1)
    if mask is None:
        count = x.shape[0]
        weights = None
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (x.shape[0],):
            raise ShapeMismatch(f"mask shape {mask.shape} does not match rows {x.shape[0]}")
        count = int(mask.sum())
        weights = Tensor(mask.astype(np.float64).reshape(-1, 1))
    if count < 2:
        raise BatchTooSmall(f"batch norm needs at least 2 valid rows, got {count}")
    if weights is None:
        mean = x.mean(axis=0, keepdims=True)
        var = ((x - mean) ** 2).mean(axis=0, keepdims=True)
    else:
        mean = (x * weights).sum(axis=0, keepdims=True) * (1.0 / count)
        var = (((x - mean) ** 2) * weights).sum(axis=0, keepdims=True) * (1.0 / count)
    m = state.momentum
    state.running_mean = m * state.running_mean + (1.0 - m) * mean.data.reshape(-1)
    state.running_var = m * state.running_var + (1.0 - m) * var.data.reshape(-1)
    state.batches_seen += 1
    normalized = (x - mean) / ((var + state.eps) ** 0.5)
    return normalized * state.gamma.reshape(1, -1) + state.beta.reshape(1, -1)


# -- loss ----------------------------------------------------------------------


def bce_with_logits(logits: Tensor, labels) -> Tensor:
    """Binary cross entropy against sigmoid(logits), summed over all entries.

    Computed as max(y,0) - y*l + log(1+exp(-|y|)) so large logits cannot
    overflow; the gradient is the textbook sigmoid(y) - l.
    """
    l = np.asarray(labels, dtype=np.float64)
    if l.shape != logits.shape:
        raise ShapeMismatch(f"labels shape {l.shape} does not match logits {logits.shape}")
    if not np.isin(l, (0.0, 1.0)).all():
        raise ValueError("labels must be binary")
    y = logits.data
    per_entry = np.maximum(y, 0.0) - y * l + np.log1p(np.exp(-np.abs(y)))

    def backward(g):
        p = np.empty_like(y)
        pos = y >= 0
        p[pos] = 1.0 / (1.0 + np.exp(-y[pos]))
        e = np.exp(y[~pos])
        p[~pos] = e / (1.0 + e)
        return (g * (p - l),)

    return Tensor._result(per_entry.sum(), (logits,), backward)
