"""Adam updates over named parameter dicts, plus a finite-difference
gradient checker used by the test suite and by debugging sessions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeMismatch, Tensor


@dataclass
class AdamState:
    """First/second moment estimates per parameter, keyed like the params."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, params: dict[str, Tensor], beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(
            m={name: np.zeros_like(p.data) for name, p in params.items()},
            v={name: np.zeros_like(p.data) for name, p in params.items()},
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(
    params: dict[str, Tensor],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    decay_mask: frozenset[str] | set[str] | None = None,
) -> None:
    """One Adam update in place; parameters are visited in sorted-name order.

    Parameters named in ``decay_mask`` get weight_decay * value added to
    their gradient first (L2 as a loss term, not decoupled decay); bias
    and offset parameters should be left out of the mask.
    """
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name in sorted(params):
        p = params[name]
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient; call backward first")
        if name not in state.m:
            raise ShapeMismatch(f"parameter {name!r} missing from optimizer state")
        if state.m[name].shape != p.data.shape:
            raise ShapeMismatch(f"state/parameter shape mismatch for {name!r}")
        g = p.grad
        if weight_decay and decay_mask and name in decay_mask:
            g = g + weight_decay * p.data
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g**2
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: int
    per_param: dict[str, float] = field(default_factory=dict)

    def passes(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def grad_check(
    loss_fn,
    params: dict[str, Tensor],
    step: float = 1e-5,
    max_coords_per_param: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_fn`` must map the current parameter values to a scalar Tensor
    deterministically (dropout off, fixed batch-norm inputs).  Relative
    error per coordinate is |a-n| / max(|a|+|n|, floor); the floor keeps
    near-zero gradient pairs from amplifying roundoff into false alarms.
    """
    loss = loss_fn()
    loss.backward(parameters=params.values())
    analytic = {name: p.grad.copy() for name, p in params.items()}

    worst = (0.0, "", 0)
    per_param: dict[str, float] = {}
    for name in sorted(params):
        p = params[name]
        coords = np.arange(p.size)
        if max_coords_per_param is not None and p.size > max_coords_per_param:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(p.size, size=max_coords_per_param, replace=False)
        flat = p.data.reshape(-1)
        worst_here = 0.0
        for c in coords:
            original = flat[c]
            flat[c] = original + step
            up = float(loss_fn().data)
            flat[c] = original - step
            down = float(loss_fn().data)
            flat[c] = original
            numeric = (up - down) / (2.0 * step)
            a = analytic[name].reshape(-1)[c]
            rel = abs(a - numeric) / max(abs(a) + abs(numeric), floor)
            if rel > worst_here:
                worst_here = rel
            if rel > worst[0]:
                worst = (rel, name, int(c))
        per_param[name] = worst_here
    return GradCheckReport(
        max_rel_error=worst[0],
        worst_param=worst[1],
        worst_index=worst[2],
        per_param=per_param,
    )
