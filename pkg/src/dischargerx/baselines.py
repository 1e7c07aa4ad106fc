"""Comparison models: logistic regression on TF-IDF text vectors, and a
one-hidden-layer perceptron over admission-medication indicator vectors.

Both reuse the autodiff core and Adam; training stops on validation-loss
patience.  The logistic classifiers for the eight medications are stored
as one weight matrix, but Adam's elementwise updates keep the columns
fully independent, so each medication's classifier is unaffected by the
other labels.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .corpus import DatasetSplit, EncodedExample
from .ndgrad import (
    AdamState,
    Tensor,
    adam_step,
    bce_with_logits,
    load_tensors,
    relu,
    save_tensors,
)
from .notes import NUM_MEDICATIONS, Medication


@dataclass(frozen=True)
class BaselineConfig:
    lr: float = 0.01
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0


@dataclass
class LrParams:
    weights: Tensor  # [feature_dim, NUM_MEDICATIONS]
    bias: Tensor  # [NUM_MEDICATIONS]

    def logits(self, features: np.ndarray) -> Tensor:
        return Tensor(np.atleast_2d(features)) @ self.weights + self.bias.reshape(1, -1)

    def probs(self, features: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logits(features).data))


@dataclass
class MlpParams:
    w1: Tensor  # [feature_dim, hidden]
    b1: Tensor  # [hidden]
    w2: Tensor  # [hidden, NUM_MEDICATIONS]
    b2: Tensor  # [NUM_MEDICATIONS]

    def logits(self, features: np.ndarray) -> Tensor:
        hidden = relu(Tensor(np.atleast_2d(features)) @ self.w1 + self.b1.reshape(1, -1))
        return hidden @ self.w2 + self.b2.reshape(1, -1)

    def probs(self, features: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logits(features).data))


def tfidf_matrix(examples: list[EncodedExample]) -> np.ndarray:
    return np.stack([ex.tfidf.to_dense() for ex in examples])


def admission_matrix(examples: list[EncodedExample]) -> np.ndarray:
    return np.stack([ex.admission_med_vector for ex in examples]).astype(np.float64)


def label_matrix(examples: list[EncodedExample]) -> np.ndarray:
    return np.array([ex.labels for ex in examples], dtype=np.float64)


def _batch_loss(params, x: np.ndarray, y: np.ndarray, l2: float, decayed: list[Tensor]) -> Tensor:
    loss = bce_with_logits(params.logits(x), y) * (1.0 / x.shape[0])
    for w in decayed:
        loss = loss + (w**2).sum() * (l2 / 2.0)
    return loss


def _fit(
    params,
    trainable: dict[str, Tensor],
    decayed: list[Tensor],
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    l2: float,
    config: BaselineConfig,
) -> tuple[object, list[dict]]:
    rng = np.random.default_rng(config.seed)
    adam = AdamState.create(trainable)
    best = copy.deepcopy(params)
    best_loss = float("inf")
    best_epoch = -1
    history: list[dict] = []
    for epoch in range(config.max_epochs):
        order = rng.permutation(x_train.shape[0])
        losses = []
        for start in range(0, len(order), config.batch_size):
            rows = order[start : start + config.batch_size]
            loss = _batch_loss(params, x_train[rows], y_train[rows], l2, decayed)
            loss.backward(parameters=trainable.values())
            adam_step(trainable, adam, lr=config.lr)
            losses.append(loss.item())
        val_loss = _batch_loss(params, x_val, y_val, l2, decayed).item()
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_loss": val_loss})
        if val_loss < best_loss:
            best_loss = val_loss
            best = copy.deepcopy(params)
            best_epoch = epoch
        elif epoch - best_epoch >= config.patience:
            break
    return best, history


def _uniform(rng: np.random.Generator, *shape) -> Tensor:
    return Tensor(rng.uniform(-0.05, 0.05, size=shape), requires_grad=True)


def train_lr(
    split: DatasetSplit,
    l2: float = 1.0,
    config: BaselineConfig = BaselineConfig(),
) -> tuple[LrParams, list[dict]]:
    """Eight L2-regularized logistic classifiers over TF-IDF vectors."""
    rng = np.random.default_rng(config.seed)
    dim = split.train[0].tfidf.dim
    params = LrParams(
        weights=_uniform(rng, dim, NUM_MEDICATIONS),
        bias=Tensor(np.zeros(NUM_MEDICATIONS), requires_grad=True),
    )
    fitted, history = _fit(
        params,
        {"weights": params.weights, "bias": params.bias},
        [params.weights],
        tfidf_matrix(split.train),
        label_matrix(split.train),
        tfidf_matrix(split.validation),
        label_matrix(split.validation),
        l2,
        config,
    )
    return fitted, history


def train_mlp(
    split: DatasetSplit,
    hidden: int = 32,
    l2: float = 1e-4,
    config: BaselineConfig = BaselineConfig(),
) -> tuple[MlpParams, list[dict]]:
    """One-hidden-layer relu network over admission-medication indicators."""
    rng = np.random.default_rng(config.seed)
    dim = split.train[0].admission_med_vector.shape[0]
    params = MlpParams(
        w1=_uniform(rng, dim, hidden),
        b1=Tensor(np.zeros(hidden), requires_grad=True),
        w2=_uniform(rng, hidden, NUM_MEDICATIONS),
        b2=Tensor(np.zeros(NUM_MEDICATIONS), requires_grad=True),
    )
    fitted, history = _fit(
        params,
        {"w1": params.w1, "b1": params.b1, "w2": params.w2, "b2": params.b2},
        [params.w1, params.w2],
        admission_matrix(split.train),
        label_matrix(split.train),
        admission_matrix(split.validation),
        label_matrix(split.validation),
        l2,
        config,
    )
    return fitted, history


def predict_baseline(params, features: np.ndarray) -> set[Medication]:
    """Medications with probability strictly above 0.5 for one feature row."""
    probs = params.probs(np.atleast_2d(features))[0]
    return {Medication(i) for i in range(NUM_MEDICATIONS) if probs[i] > 0.5}


def save_baseline(path, params, kind: str | None = None) -> None:
    if isinstance(params, LrParams):
        tensors = {"weights": params.weights.data, "bias": params.bias.data}
        kind = kind or "lr"
    elif isinstance(params, MlpParams):
        tensors = {"w1": params.w1.data, "b1": params.b1.data, "w2": params.w2.data, "b2": params.b2.data}
        kind = kind or "mlp"
    else:
        raise TypeError(f"unknown baseline params {type(params).__name__}")
    save_tensors(path, tensors, extra={"kind": kind})


def load_baseline(path):
    tensors, extra = load_tensors(path)
    kind = extra.get("kind")
    if kind == "lr":
        return LrParams(
            weights=Tensor(tensors["weights"], requires_grad=True),
            bias=Tensor(tensors["bias"], requires_grad=True),
        )
    if kind == "mlp":
        return MlpParams(
            w1=Tensor(tensors["w1"], requires_grad=True),
            b1=Tensor(tensors["b1"], requires_grad=True),
            w2=Tensor(tensors["w2"], requires_grad=True),
            b2=Tensor(tensors["b2"], requires_grad=True),
        )
    raise ValueError(f"checkpoint has unknown baseline kind {kind!r}")
