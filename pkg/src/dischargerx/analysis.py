"""Interpretability outputs over a trained model.

Three views into what the network learned: nearest neighbors in the word
embedding (which words the model treats as interchangeable), the corpus
n-grams that excite each convolution filter most strongly, and an exact
t-SNE projection of the dense-layer note vectors.  Everything lands in
plain CSV; rendering is left to external tools.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .corpus import PAD_INDEX, UNK_INDEX, EncodedExample, Vocabulary
from .model import ModelParams, forward_batch
from .ndgrad import ACTIVATIONS, Tensor, batch_norm, conv_bank, unfold_windows


class UnknownWord(ValueError):
    pass


class TooFewPoints(ValueError):
    pass


class BadPerplexity(ValueError):
    pass


# -- embedding nearest neighbors -------------------------------------------------


@dataclass(frozen=True)
class NeighborEntry:
    query: str
    neighbor: str
    distance: float


@dataclass
class NeighborReport:
    entries: list[NeighborEntry]


def nearest_neighbor(word: str, embedding: np.ndarray, vocab: Vocabulary) -> tuple[str, float]:
    """Closest other real word by Euclidean embedding distance.

    Padding and unknown markers are never returned; exact distance ties
    break lexicographically.
    """
    index = vocab.lookup(word)
    if index in (PAD_INDEX, UNK_INDEX):
        raise UnknownWord(f"{word!r} is not a vocabulary word")
    candidates = [i for i in range(len(vocab.words)) if i not in (PAD_INDEX, UNK_INDEX, index)]
    if not candidates:
        raise UnknownWord(f"vocabulary has no other word to compare {word!r} against")
    diffs = embedding[candidates] - embedding[index]
    distances = np.sqrt((diffs**2).sum(axis=1))
    best = distances.min()
    tied = [vocab.words[candidates[i]] for i in np.flatnonzero(distances == best)]
    return min(tied), float(best)


def neighbor_report(words: list[str], embedding: np.ndarray, vocab: Vocabulary) -> NeighborReport:
    entries = []
    for word in words:
        neighbor, distance = nearest_neighbor(word, embedding, vocab)
        entries.append(NeighborEntry(query=word, neighbor=neighbor, distance=distance))
    return NeighborReport(entries=entries)


def write_neighbors_csv(report: NeighborReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["query", "neighbor", "distance"])
        for e in report.entries:
            writer.writerow([e.query, e.neighbor, f"{e.distance:.8f}"])


# -- top n-grams per filter -------------------------------------------------------


@dataclass
class FilterNgrams:
    filter_id: int  # global index across all banks
    window: int
    ngrams: list[tuple[str, float]]  # (text, value) descending


@dataclass
class FilterNgramReport:
    filters: list[FilterNgrams]


def filter_ngram_report(
    params: ModelParams,
    examples: list[EncodedExample],
    vocab: Vocabulary,
    top_n: int = 5,
    batch_size: int = 64,
) -> FilterNgramReport:
    """Top-N distinct n-grams per filter by the value max pooling sees.

    Values are the post-activation filter responses in inference mode
    (batch norm uses running statistics), evaluated over every window
    that stays inside a note's real tokens.  A text that occurs several
    times is scored by its best occurrence and reported once.
    """
    act = ACTIVATIONS[params.config.activation]
    report: list[FilterNgrams] = []
    filter_base = 0
    for bank in params.banks:
        n = bank.window
        values_parts: list[np.ndarray] = []
        texts: list[str] = []
        for start in range(0, len(examples), batch_size):
            chunk = examples[start : start + batch_size]
            indices = np.stack([ex.token_indices for ex in chunk])
            lengths = (indices != PAD_INDEX).sum(axis=1)
            batch, length = indices.shape
            positions = length - n + 1
            embedded = Tensor(params.embedding.data[indices])
            windows = unfold_windows(embedded, n)
            scores = conv_bank(windows, bank.filters, bank.bias)
            activated = act(batch_norm(scores, bank.bn, training=False)).data
            activated = activated.reshape(batch, positions, -1)
            for b in range(batch):
                valid = int(lengths[b]) - n + 1
                values_parts.append(activated[b, :valid])
                row = indices[b]
                for p in range(valid):
                    texts.append(" ".join(vocab.words[row[p + w]] for w in range(n)))
        values = np.concatenate(values_parts, axis=0)  # [windows, filters]
        for f in range(bank.filters.shape[1]):
            column = values[:, f]
            picked: list[tuple[str, float]] = []
            seen: set[str] = set()
            for row_idx in np.argsort(-column, kind="stable"):
                text = texts[row_idx]
                if text in seen:
                    continue
                seen.add(text)
                picked.append((text, float(column[row_idx])))
                if len(picked) == top_n:
                    break
            report.append(FilterNgrams(filter_id=filter_base + f, window=n, ngrams=picked))
        filter_base += bank.filters.shape[1]
    return FilterNgramReport(filters=report)


def write_filter_ngrams_csv(report: FilterNgramReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["filter_id", "window", "rank", "ngram", "value"])
        for entry in report.filters:
            for rank, (text, value) in enumerate(entry.ngrams, start=1):
                writer.writerow([entry.filter_id, entry.window, rank, text, f"{value:.8f}"])


# -- exact t-SNE -------------------------------------------------------------------


@dataclass
class TsneEmbedding:
    coords: np.ndarray  # [points, 2]
    labels: np.ndarray  # [points, medications] binary flags
    kl_initial: float
    kl_final: float


def _pairwise_sq_distances(x: np.ndarray) -> np.ndarray:
    norms = (x**2).sum(axis=1)
    d2 = norms[:, None] + norms[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def input_affinities(x: np.ndarray, perplexity: float, tol: float = 1e-5, max_iter: int = 50) -> np.ndarray:
    """Conditional Gaussian affinities with per-point bandwidths found by
    binary search so each row's entropy hits ln(perplexity).  Rows sum
    to 1; the diagonal is 0."""
    n = x.shape[0]
    d2 = _pairwise_sq_distances(x)
    target = np.log(perplexity)
    p = np.zeros((n, n))
    for i in range(n):
        row = np.delete(d2[i], i)
        beta, beta_lo, beta_hi = 1.0, 0.0, np.inf
        for _ in range(max_iter):
            weights = np.exp(-row * beta)
            total = weights.sum()
            if total <= 0.0:
                entropy = 0.0
                probs = np.zeros_like(row)
            else:
                probs = weights / total
                nonzero = probs > 0
                entropy = -(probs[nonzero] * np.log(probs[nonzero])).sum()
            if abs(entropy - target) < tol:
                break
            if entropy > target:  # distribution too flat, sharpen it
                beta_lo = beta
                beta = beta * 2.0 if beta_hi == np.inf else (beta + beta_hi) / 2.0
            else:
                beta_hi = beta
                beta = beta / 2.0 if beta_lo == 0.0 else (beta + beta_lo) / 2.0
        p[i, np.arange(n) != i] = probs
    return p


def _output_affinities(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = 1.0 / (1.0 + _pairwise_sq_distances(y))
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    return np.maximum(q, 1e-12), num


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float((p[mask] * np.log(p[mask] / q[mask])).sum())


def tsne(
    x: np.ndarray,
    perplexity: float = 30.0,
    iters: int = 1000,
    seed: int = 0,
    learning_rate: float = 200.0,
    exaggeration: float = 12.0,
    exaggeration_iters: int = 250,
    labels: np.ndarray | None = None,
) -> TsneEmbedding:
    """Exact t-SNE to 2-D with early exaggeration and a momentum schedule.

    Deterministic under seed.  The recorded KL divergences compare the
    un-exaggerated input affinities against the initial and final maps;
    any run long enough to converge ends with kl_final < kl_initial.
    The exaggeration phase is capped at a quarter of the run; otherwise
    a short run would end mid-phase with the map fitted to the inflated
    affinities.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 10:
        raise TooFewPoints(f"t-SNE needs at least 10 points, got {n}")
    if perplexity <= 0 or perplexity >= n / 3:
        raise BadPerplexity(f"perplexity must be in (0, {n / 3:.1f}) for {n} points")
    exaggeration_iters = min(exaggeration_iters, iters // 4)
    conditional = input_affinities(x, perplexity)
    p = (conditional + conditional.T) / (2.0 * n)
    p = np.maximum(p, 1e-12)
    np.fill_diagonal(p, 0.0)

    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, 1e-4, size=(n, 2))
    q, _ = _output_affinities(y)
    kl_initial = _kl(p, q)

    velocity = np.zeros_like(y)
    for t in range(iters):
        pe = p * exaggeration if t < exaggeration_iters else p
        q, num = _output_affinities(y)
        coeff = (pe - q) * num
        grad = 4.0 * ((np.diag(coeff.sum(axis=1)) - coeff) @ y)
        momentum = 0.5 if t < exaggeration_iters else 0.8
        velocity = momentum * velocity - learning_rate * grad
        y = y + velocity
        y = y - y.mean(axis=0, keepdims=True)
    q, _ = _output_affinities(y)
    kl_final = _kl(p, q)
    return TsneEmbedding(
        coords=y,
        labels=np.zeros((n, 0), dtype=np.int8) if labels is None else np.asarray(labels, dtype=np.int8),
        kl_initial=kl_initial,
        kl_final=kl_final,
    )


def note_vectors(params: ModelParams, examples: list[EncodedExample], batch_size: int = 256) -> np.ndarray:
    """Dense-layer activations for each example, inference mode."""
    parts = []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        indices = np.stack([ex.token_indices for ex in chunk])
        parts.append(forward_batch(indices, params, training=False).dense.data)
    return np.concatenate(parts, axis=0)


def write_tsne_csv(embedding: TsneEmbedding, visit_ids: list[str], path) -> None:
    k = embedding.labels.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["visit_id", "x", "y"] + [f"med_{i}" for i in range(k)])
        for row, visit_id in enumerate(visit_ids):
            coords = [f"{embedding.coords[row, 0]:.8f}", f"{embedding.coords[row, 1]:.8f}"]
            writer.writerow([visit_id] + coords + [int(b) for b in embedding.labels[row]])
