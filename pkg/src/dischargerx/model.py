"""Convolutional multi-label model over admission-note token sequences.

The network embeds the token sequence, runs banks of width-3/4/5 filters
over it, max-pools each filter into a fixed-length vector z, passes z
through one dense layer into latent factors x, and reads out logits
y = offset + loading @ x.  Sigmoids of the logits are per-medication
prescription probabilities, and the loading matrix also yields the
medication covariance A = loading @ cov[x] @ loading.T.

Batch normalization sits before each nonlinearity (per filter over all
valid window positions in the batch, and per dense unit); windows that
would overlap trailing padding are excluded from both the statistics and
the pooling candidates.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import numpy as np

from . import metrics
from .corpus import PAD_INDEX, DatasetSplit, EncodedExample
from .ndgrad import (
    ACTIVATIONS,
    AdamState,
    BatchNormState,
    Tensor,
    adam_step,
    batch_norm,
    bce_with_logits,
    concat,
    conv_bank,
    dropout,
    embedding,
    load_tensors,
    masked_max,
    save_tensors,
    unfold_windows,
)
from .notes import NUM_MEDICATIONS, Medication


class SequenceTooShort(ValueError):
    pass


class EmptyBatch(ValueError):
    pass


class DegenerateVariance(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    embedding_dim: int = 100
    dense_units: int = 64
    windows: tuple[int, ...] = (3, 4, 5)
    filters_per_window: int = 64
    activation: str = "relu"
    lr: float = 0.01
    keep_rate: float = 0.3
    l2: float = 0.1
    batch_size: int = 64
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    bn_momentum: float = 0.9
    covariance: str = "empirical"  # or "identity"
    outputs: int = NUM_MEDICATIONS

    def to_dict(self) -> dict:
        return {
            "embedding_dim": self.embedding_dim,
            "dense_units": self.dense_units,
            "windows": list(self.windows),
            "filters_per_window": self.filters_per_window,
            "activation": self.activation,
            "lr": self.lr,
            "keep_rate": self.keep_rate,
            "l2": self.l2,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "seed": self.seed,
            "bn_momentum": self.bn_momentum,
            "covariance": self.covariance,
            "outputs": self.outputs,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in obj.items() if k in known}
        if "windows" in kwargs:
            kwargs["windows"] = tuple(int(w) for w in kwargs["windows"])
        return cls(**kwargs)


@dataclass
class ConvBank:
    window: int
    filters: Tensor  # [window*embedding_dim, filter_count]
    bias: Tensor  # [filter_count]
    bn: BatchNormState


@dataclass
class ModelParams:
    config: TrainConfig
    vocab_size: int
    embedding: Tensor  # [vocab, embedding_dim]
    banks: list[ConvBank]
    dense_w: Tensor  # [total_filters, dense_units]
    dense_b: Tensor  # [dense_units]
    dense_bn: BatchNormState
    loading: Tensor  # [NUM_MEDICATIONS, dense_units]
    offset: Tensor  # [NUM_MEDICATIONS]

    @property
    def total_filters(self) -> int:
        return sum(b.filters.shape[1] for b in self.banks)

    def trainable(self) -> dict[str, Tensor]:
        out = {"embedding": self.embedding}
        for bank in self.banks:
            out[f"conv{bank.window}_filters"] = bank.filters
            out[f"conv{bank.window}_bias"] = bank.bias
            out[f"conv{bank.window}_bn_gamma"] = bank.bn.gamma
            out[f"conv{bank.window}_bn_beta"] = bank.bn.beta
        out["dense_w"] = self.dense_w
        out["dense_b"] = self.dense_b
        out["dense_bn_gamma"] = self.dense_bn.gamma
        out["dense_bn_beta"] = self.dense_bn.beta
        out["loading"] = self.loading
        out["offset"] = self.offset
        return out

    def decay_set(self) -> frozenset[str]:
        """Weights that carry the L2 penalty: everything except biases,
        the offset, and batch-norm scale/shift."""
        names = {"embedding", "dense_w", "loading"}
        names.update(f"conv{b.window}_filters" for b in self.banks)
        return frozenset(names)


def init_params(config: TrainConfig, vocab_size: int, seed: int | None = None) -> ModelParams:
    """Uniform [-0.05, 0.05] weights, zero biases and offset."""
    rng = np.random.default_rng(config.seed if seed is None else seed)

    def uniform(*shape):
        return Tensor(rng.uniform(-0.05, 0.05, size=shape), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    h, s, f = config.embedding_dim, config.dense_units, config.filters_per_window
    banks = [
        ConvBank(
            window=n,
            filters=uniform(n * h, f),
            bias=zeros(f),
            bn=BatchNormState.create(f, momentum=config.bn_momentum),
        )
        for n in config.windows
    ]
    return ModelParams(
        config=config,
        vocab_size=vocab_size,
        embedding=uniform(vocab_size, h),
        banks=banks,
        dense_w=uniform(f * len(config.windows), s),
        dense_b=zeros(s),
        dense_bn=BatchNormState.create(s, momentum=config.bn_momentum),
        loading=uniform(config.outputs, s),
        offset=zeros(config.outputs),
    )


@dataclass
class ForwardTrace:
    """Intermediate values of one example's forward pass (inference mode)."""

    probs: np.ndarray  # [NUM_MEDICATIONS]
    logits: np.ndarray  # [NUM_MEDICATIONS]
    dense: np.ndarray  # [dense_units]
    pooled: np.ndarray  # [total_filters]
    argmax: dict[int, np.ndarray]  # window size -> [filter_count] positions


@dataclass
class BatchOutput:
    logits: Tensor  # [batch, NUM_MEDICATIONS]
    dense: Tensor  # [batch, dense_units]
    pooled: Tensor  # [batch, total_filters]
    argmax: dict[int, np.ndarray]  # window -> [batch, filter_count]


def _token_lengths(indices: np.ndarray) -> np.ndarray:
    return (indices != PAD_INDEX).sum(axis=1)


def forward_batch(
    indices: np.ndarray,
    params: ModelParams,
    training: bool,
    rng: np.random.Generator | None = None,
) -> BatchOutput:
    """Run the network on a [batch, length] int index matrix.

    Padding must trail the real tokens of each row.  Raises
    SequenceTooShort when any row has fewer real tokens than the widest
    filter window.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim != 2 or indices.shape[0] == 0:
        raise EmptyBatch(f"expected a non-empty [batch, length] matrix, got {indices.shape}")
    act = ACTIVATIONS[params.config.activation]
    lengths = _token_lengths(indices)
    widest = max(b.window for b in params.banks)
    if (lengths < widest).any():
        short = int(lengths.min())
        raise SequenceTooShort(f"an example has {short} tokens; filters need {widest}")
    if training and rng is None and params.config.keep_rate < 1.0:
        raise ValueError("training mode needs an rng for dropout")

    batch, length = indices.shape
    embedded = embedding(params.embedding, indices)  # [batch, length, h]
    pooled_parts = []
    argmax: dict[int, np.ndarray] = {}
    for bank in params.banks:
        positions = length - bank.window + 1
        windows = unfold_windows(embedded, bank.window)  # [batch*positions, n*h]
        scores = conv_bank(windows, bank.filters, bank.bias)
        valid = np.arange(positions)[None, :] < (lengths - bank.window + 1)[:, None]
        if training:
            scores = batch_norm(scores, bank.bn, training=True, mask=valid.reshape(-1))
        else:
            scores = batch_norm(scores, bank.bn, training=False)
        activated = act(scores).reshape(batch, positions, bank.filters.shape[1])
        pooled, arg = masked_max(activated, valid)
        pooled_parts.append(pooled)
        argmax[bank.window] = arg
    z = concat(pooled_parts, axis=1)  # [batch, total_filters]
    z = dropout(z, params.config.keep_rate, training, rng)
    pre = z @ params.dense_w + params.dense_b.reshape(1, -1)
    pre = batch_norm(pre, params.dense_bn, training=training)
    x = act(pre)  # [batch, dense_units]
    logits = x @ params.loading.T + params.offset.reshape(1, -1)
    return BatchOutput(logits=logits, dense=x, pooled=z, argmax=argmax)


def forward(indices, params: ModelParams) -> ForwardTrace:
    """Single-example inference pass returning all intermediate values."""
    out = forward_batch(np.asarray(indices, dtype=np.int64).reshape(1, -1), params, training=False)
    logits = out.logits.data[0]
    return ForwardTrace(
        probs=1.0 / (1.0 + np.exp(-logits)),
        logits=logits.copy(),
        dense=out.dense.data[0].copy(),
        pooled=out.pooled.data[0].copy(),
        argmax={n: a[0].copy() for n, a in out.argmax.items()},
    )


def predict(trace: ForwardTrace) -> set[Medication]:
    """Medications with predicted probability strictly greater than 0.5."""
    return {Medication(i) for i in range(len(trace.probs)) if trace.probs[i] > 0.5}


def _label_matrix(batch: list[EncodedExample]) -> np.ndarray:
    return np.array([ex.labels for ex in batch], dtype=np.float64)


def _index_matrix(batch: list[EncodedExample]) -> np.ndarray:
    stacked = np.stack([ex.token_indices for ex in batch])
    # trailing padding never reaches the stats or the pool, so cut it off
    longest = int(_token_lengths(stacked).max(initial=1))
    return stacked[:, : max(longest, 1)]


def loss_batch(
    batch: list[EncodedExample],
    params: ModelParams,
    training: bool = True,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Mean per-example cross entropy plus l2/2 times the squared norm of
    every decayed weight."""
    if not batch:
        raise EmptyBatch("loss over an empty batch")
    out = forward_batch(_index_matrix(batch), params, training=training, rng=rng)
    loss = bce_with_logits(out.logits, _label_matrix(batch)) * (1.0 / len(batch))
    l2 = params.config.l2
    if l2:
        trainable = params.trainable()
        penalty = sum(((trainable[name] ** 2).sum() for name in sorted(params.decay_set())), Tensor(0.0))
        loss = loss + penalty * (l2 / 2.0)
    return loss


def predict_probs(params: ModelParams, examples: list[EncodedExample], batch_size: int = 256) -> np.ndarray:
    """Inference-mode probabilities, [len(examples), outputs]."""
    rows = []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        out = forward_batch(_index_matrix(chunk), params, training=False)
        rows.append(1.0 / (1.0 + np.exp(-out.logits.data)))
    return np.concatenate(rows, axis=0) if rows else np.zeros((0, params.config.outputs))


def evaluate(params: ModelParams, examples: list[EncodedExample]) -> metrics.MetricsReport:
    probs = predict_probs(params, examples)
    predicted = (probs > 0.5).astype(np.int8)
    actual = np.array([ex.labels for ex in examples], dtype=np.int8)
    return metrics.score_predictions(actual, predicted)


def _clone_params(params: ModelParams) -> ModelParams:
    clone = copy.deepcopy(params)
    return clone


def train(
    split: DatasetSplit,
    config: TrainConfig,
    vocab_size: int,
    log=None,
) -> tuple[ModelParams, list[dict]]:
    """Mini-batch Adam with early stopping on validation macro-F1.

    Returns the best parameters (by validation macro-F1, earliest epoch on
    ties) and a per-epoch history of train loss and validation metrics.
    The whole run is a deterministic function of the config seed and the
    split contents.
    """
    if not split.train or not split.validation:
        raise EmptyBatch("training needs non-empty train and validation sets")
    rng = np.random.default_rng(config.seed)
    params = init_params(config, vocab_size)
    trainable = params.trainable()
    adam = AdamState.create(trainable)

    best = _clone_params(params)
    best_score = -1.0
    best_epoch = -1
    history: list[dict] = []
    for epoch in range(config.max_epochs):
        order = rng.permutation(len(split.train))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [split.train[i] for i in order[start : start + config.batch_size]]
            if len(batch) < 2:
                continue  # batch statistics are undefined for a single row
            loss = loss_batch(batch, params, training=True, rng=rng)
            loss.backward(parameters=trainable.values())
            adam_step(trainable, adam, lr=config.lr)
            epoch_losses.append(loss.item())
        report = evaluate(params, split.validation)
        entry = {
            "epoch": epoch,
            "train_loss": float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
            "val_macro_f1": report.macro.f1,
            "val_micro_f1": report.micro.f1,
        }
        history.append(entry)
        if log is not None:
            log(entry)
        if report.macro.f1 > best_score:
            best_score = report.macro.f1
            best = _clone_params(params)
            best_epoch = epoch
        elif epoch - best_epoch >= config.patience:
            break
    return best, history


# -- medication covariance -----------------------------------------------------


@dataclass
class CovarianceReport:
    """Factor-head covariance A = loading cov[x] loading.T and the derived
    correlations; entries whose variance collapsed are flagged undefined."""

    covariance: np.ndarray  # [k, k]
    correlation: np.ndarray  # [k, k], 0.0 where undefined
    defined: np.ndarray  # [k, k] bool

    def pairs_by_correlation(self) -> list[tuple[int, int, float]]:
        """Distinct index pairs sorted by correlation, strongest first."""
        out = []
        for i in range(self.correlation.shape[0]):
            for j in range(i + 1, self.correlation.shape[1]):
                if self.defined[i, j]:
                    out.append((i, j, float(self.correlation[i, j])))
        out.sort(key=lambda t: -t[2])
        return out


def medication_covariance(
    params: ModelParams,
    examples: list[EncodedExample],
    strict: bool = False,
) -> CovarianceReport:
    """Estimate cov[x] empirically over examples (inference mode) and push
    it through the loading matrix.

    With config.covariance == "identity", cov[x] is fixed to the identity
    instead, isolating what the loading matrix alone encodes.  When a
    medication's variance degenerates (< 1e-12) its correlations are
    reported as undefined; strict=True raises DegenerateVariance instead.
    """
    lam = params.loading.data
    if params.config.covariance == "identity":
        cov_x = np.eye(lam.shape[1])
    else:
        if len(examples) < 2:
            raise EmptyBatch("empirical covariance needs at least 2 examples")
        feats = []
        for start in range(0, len(examples), 256):
            chunk = examples[start : start + 256]
            feats.append(forward_batch(_index_matrix(chunk), params, training=False).dense.data)
        x = np.concatenate(feats, axis=0)
        centered = x - x.mean(axis=0, keepdims=True)
        cov_x = centered.T @ centered / x.shape[0]
    a = lam @ cov_x @ lam.T
    a = (a + a.T) / 2.0  # exact symmetry despite float round-off
    diag = np.diag(a).copy()
    ok = diag >= 1e-12
    if strict and not ok.all():
        raise DegenerateVariance(f"medications {np.flatnonzero(~ok).tolist()} have zero variance")
    denom = np.sqrt(np.where(ok, diag, 1.0))
    corr = a / denom[:, None] / denom[None, :]
    defined = ok[:, None] & ok[None, :]
    corr = np.where(defined, corr, 0.0)
    np.fill_diagonal(corr, np.where(ok, 1.0, 0.0))
    return CovarianceReport(covariance=a, correlation=corr, defined=defined)


# -- checkpointing --------------------------------------------------------------


def _bn_tensors(prefix: str, bn: BatchNormState) -> dict[str, np.ndarray]:
    return {
        f"{prefix}_gamma": bn.gamma.data,
        f"{prefix}_beta": bn.beta.data,
        f"{prefix}_running_mean": bn.running_mean,
        f"{prefix}_running_var": bn.running_var,
    }


def save_checkpoint(path, params: ModelParams, sidecar: dict | None = None) -> None:
    """Write the binary parameter file plus a JSON sidecar at <path>.json."""
    tensors: dict[str, np.ndarray] = {"embedding": params.embedding.data}
    for bank in params.banks:
        tensors[f"conv{bank.window}_filters"] = bank.filters.data
        tensors[f"conv{bank.window}_bias"] = bank.bias.data
        tensors.update(_bn_tensors(f"conv{bank.window}_bn", bank.bn))
    tensors["dense_w"] = params.dense_w.data
    tensors["dense_b"] = params.dense_b.data
    tensors.update(_bn_tensors("dense_bn", params.dense_bn))
    tensors["loading"] = params.loading.data
    tensors["offset"] = params.offset.data
    save_tensors(path, tensors, extra={"config": params.config.to_dict(), "vocab_size": params.vocab_size})
    meta = dict(sidecar or {})
    meta.setdefault("config", params.config.to_dict())
    meta["vocab_size"] = params.vocab_size
    with open(f"{path}.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def _restore_bn(prefix: str, tensors: dict[str, np.ndarray], momentum: float) -> BatchNormState:
    state = BatchNormState.create(tensors[f"{prefix}_gamma"].size, momentum=momentum)
    state.gamma.data[...] = tensors[f"{prefix}_gamma"]
    state.beta.data[...] = tensors[f"{prefix}_beta"]
    state.running_mean = tensors[f"{prefix}_running_mean"].copy()
    state.running_var = tensors[f"{prefix}_running_var"].copy()
    return state


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Rebuild ModelParams from a checkpoint; returns (params, sidecar)."""
    tensors, extra = load_tensors(path)
    config = TrainConfig.from_dict(extra["config"])
    vocab_size = int(extra["vocab_size"])
    params = init_params(config, vocab_size)
    params.embedding.data[...] = tensors["embedding"]
    for bank in params.banks:
        bank.filters.data[...] = tensors[f"conv{bank.window}_filters"]
        bank.bias.data[...] = tensors[f"conv{bank.window}_bias"]
        bank.bn = _restore_bn(f"conv{bank.window}_bn", tensors, config.bn_momentum)
    params.dense_w.data[...] = tensors["dense_w"]
    params.dense_b.data[...] = tensors["dense_b"]
    params.dense_bn = _restore_bn("dense_bn", tensors, config.bn_momentum)
    params.loading.data[...] = tensors["loading"]
    params.offset.data[...] = tensors["offset"]
    try:
        with open(f"{path}.json", "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
    except FileNotFoundError:
        sidecar = dict(extra)
    return params, sidecar
