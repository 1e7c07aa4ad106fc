"""Dense float64 tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array and remembers how it was computed; calling
``backward()`` on a scalar walks the recorded graph in reverse topological
order and accumulates gradients into every reachable tensor that was
created with ``requires_grad=True``.  The graph is rebuilt on every
forward pass (define-by-run), so control flow in model code needs no
special handling.

Every op validates that its output is finite; NaN or Inf anywhere is
treated as a bug in the caller, not a value to propagate.  The check can
be disabled for speed with ``set_finite_checks(False)``.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatch(ValueError):
    pass


class NotScalarLoss(ValueError):
    pass


class NonFiniteValue(FloatingPointError):
    pass


_FINITE_CHECKS = True


def set_finite_checks(enabled: bool) -> bool:
    """Toggle per-op NaN/Inf validation; returns the previous setting."""
    global _FINITE_CHECKS
    previous = _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)
    return previous


def _ensure_finite(data: np.ndarray) -> None:
    if _FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise NonFiniteValue("operation produced NaN or Inf")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back down to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the autodiff graph; holds float64 data and its gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _result(data, parents, backward_fn) -> "Tensor":
        _ensure_finite(np.asarray(data))
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward_fn
        return out

    def backward(self, parameters=None) -> None:
        """Accumulate d(self)/d(leaf) into .grad over the recorded graph.

        Gradients of all visited tensors are reset first, so repeated
        calls do not leak across batches.  ``parameters`` (optional
        iterable) additionally get zero gradients when they do not lie on
        any path to this loss.
        """
        if self.data.size != 1:
            raise NotScalarLoss(f"loss must be scalar, got shape {self.shape}")
        # Iterative post-order DFS.  A node enters ``order`` (and ``seen``)
        # only once all graph descendants reachable from it are ordered;
        # marking at push time instead breaks on diamond-shaped graphs.
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                if id(node) not in seen:
                    seen.add(id(node))
                    order.append(node)
                continue
            if id(node) in seen:
                continue
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        for node in order:
            node.grad = np.zeros_like(node.data)
        if parameters is not None:
            for p in parameters:
                if id(p) not in seen:
                    p.grad = np.zeros_like(p.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None:
                continue
            grads = node._backward(node.grad)
            for parent, grad in zip(node._parents, grads):
                if parent.requires_grad and grad is not None:
                    parent.grad += grad

    # -- elementwise arithmetic ---------------------------------------------

    @staticmethod
    def _lift(value) -> "Tensor":
        return value if isinstance(value, Tensor) else Tensor(value)

    def __add__(self, other):
        other = self._lift(other)
        return Tensor._result(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape)),
        )

    __radd__ = __add__

    def __mul__(self, other):
        other = self._lift(other)
        return Tensor._result(
            self.data * other.data,
            (self, other),
            lambda g: (
                _unbroadcast(g * other.data, self.shape),
                _unbroadcast(g * self.data, other.shape),
            ),
        )

    __rmul__ = __mul__

    def __neg__(self):
        return Tensor._result(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __truediv__(self, other):
        other = self._lift(other)
        return Tensor._result(
            self.data / other.data,
            (self, other),
            lambda g: (
                _unbroadcast(g / other.data, self.shape),
                _unbroadcast(-g * self.data / (other.data**2), other.shape),
            ),
        )

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        e = float(exponent)
        return Tensor._result(
            self.data**e,
            (self,),
            lambda g: (g * e * self.data ** (e - 1.0),),
        )

    def sqrt(self):
        return self**0.5

    def exp(self):
        out_data = np.exp(self.data)
        return Tensor._result(out_data, (self,), lambda g: (g * out_data,))

    # -- linear algebra and shape ops ----------------------------------------

    def __matmul__(self, other):
        other = self._lift(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeMismatch("matmul expects 2-D operands")
        if self.shape[1] != other.shape[0]:
            raise ShapeMismatch(f"inner dims differ: {self.shape} @ {other.shape}")
        return Tensor._result(
            self.data @ other.data,
            (self, other),
            lambda g: (g @ other.data.T, self.data.T @ g),
        )

    def sum(self, axis=None, keepdims: bool = False):
        def backward(g):
            if axis is None:
                return (np.broadcast_to(g, self.shape).copy(),)
            expanded = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(expanded, self.shape).copy(),)

        return Tensor._result(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.size
        elif isinstance(axis, tuple):
            count = int(np.prod([self.shape[a] for a in axis]))
        else:
            count = self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Tensor._result(
            self.data.reshape(shape),
            (self,),
            lambda g: (g.reshape(self.shape),),
        )

    def transpose(self):
        if self.data.ndim != 2:
            raise ShapeMismatch("transpose expects a 2-D tensor")
        return Tensor._result(self.data.T.copy(), (self,), lambda g: (g.T,))

    @property
    def T(self):
        return self.transpose()


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [Tensor._lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return Tensor._result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def embedding(table: Tensor, indices) -> Tensor:
    """Gather rows of a [v, h] table; backward scatter-adds into the table."""
    idx = np.asarray(indices, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeMismatch("embedding table must be 2-D")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError("embedding index out of range")

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, idx.reshape(-1), g.reshape(-1, table.shape[1]))
        return (grad,)

    return Tensor._result(table.data[idx], (table,), backward)


def unfold_windows(x: Tensor, window: int) -> Tensor:
    """Stack sliding windows of length ``window`` as flattened rows.

    [l, h] input yields [l-window+1, window*h]; a batched [b, l, h] input
    yields [b*(l-window+1), window*h] with each example's rows contiguous.
    Convolving every filter then reduces to one matrix product.
    """
    if x.data.ndim == 2:
        length, width = x.shape
        batch = None
    elif x.data.ndim == 3:
        batch, length, width = x.shape
    else:
        raise ShapeMismatch("unfold_windows expects a 2-D or 3-D tensor")
    if not 1 <= window <= length:
        raise ShapeMismatch(f"window {window} does not fit length {length}")
    positions = length - window + 1
    rows = np.arange(positions)[:, None] + np.arange(window)[None, :]
    flat = (rows[:, :, None] * width + np.arange(width)).reshape(positions, window * width)
    if batch is not None:
        offsets = (np.arange(batch) * length * width)[:, None, None]
        flat = (flat[None, :, :] + offsets).reshape(batch * positions, window * width)

    def backward(g):
        grad = np.zeros(x.data.size, dtype=np.float64)
        np.add.at(grad, flat.reshape(-1), g.reshape(-1))
        return (grad.reshape(x.shape),)

    return Tensor._result(x.data.reshape(-1)[flat], (x,), backward)
