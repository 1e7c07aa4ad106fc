"""Turn parsed notes into model-ready datasets.

Covers vocabulary construction, token-index encoding, TF-IDF featurization
for the bag-of-words baseline, admission-medication binary vectors, and
deterministic 80/10/10 splits.  Statistics (vocabulary, document
frequencies, medication vocabulary) are always fitted on the training
split only, then applied to validation and test.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .notes import NUM_MEDICATIONS, ParsedNote

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1

TRAIN_FRACTION = 0.8
VALIDATION_FRACTION = 0.1


class EmptyCorpus(ValueError):
    pass


class TooFewExamples(ValueError):
    pass


@dataclass
class Vocabulary:
    """Dense word-index mapping with index 0 = padding, 1 = unknown."""

    words: list[str]
    doc_freq: dict[str, int]
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.index = {w: i for i, w in enumerate(self.words)}

    @property
    def size(self) -> int:
        return len(self.words)

    def lookup(self, word: str) -> int:
        return self.index.get(word, UNK_INDEX)


def build_vocabulary(notes: Sequence[ParsedNote], min_count: int = 5) -> Vocabulary:
    """Collect every token with corpus frequency >= min_count.

    Word order is deterministic (frequency descending, then lexicographic)
    and therefore invariant to the order of the input notes.
    """
    if not notes:
        raise EmptyCorpus("cannot build a vocabulary from zero notes")
    counts: Counter[str] = Counter()
    doc_freq: Counter[str] = Counter()
    for note in notes:
        counts.update(note.tokens)
        doc_freq.update(set(note.tokens))
    kept = sorted(
        (w for w, c in counts.items() if c >= min_count),
        key=lambda w: (-counts[w], w),
    )
    words = [PAD_TOKEN, UNK_TOKEN] + kept
    return Vocabulary(words=words, doc_freq={w: doc_freq[w] for w in kept})


def encode_tokens(note: ParsedNote, vocab: Vocabulary, max_len: int) -> np.ndarray:
    """Map tokens to indices, truncate to max_len, right-pad with PAD_INDEX."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    idx = np.full(max_len, PAD_INDEX, dtype=np.int64)
    for i, tok in enumerate(note.tokens[:max_len]):
        idx[i] = vocab.lookup(tok)
    return idx


@dataclass
class SparseVector:
    """Sparse non-negative feature vector (sorted unique indices)."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        dense[self.indices] = self.values
        return dense


@dataclass
class TfidfVectorizer:
    """TF-IDF over the most document-frequent vocabulary words.

    tf is the raw in-note count; idf = ln(N / (1 + df)) with negative
    values clamped to zero, fitted on the corpus passed to fit_tfidf.
    """

    feature_words: list[str]
    idf: np.ndarray
    word_to_feature: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.word_to_feature = {w: i for i, w in enumerate(self.feature_words)}

    @property
    def dim(self) -> int:
        return len(self.feature_words)

    def transform(self, note: ParsedNote) -> SparseVector:
        counts = Counter(note.tokens)
        pairs = sorted(
            (self.word_to_feature[w], c)
            for w, c in counts.items()
            if w in self.word_to_feature
        )
        indices = np.array([i for i, _ in pairs], dtype=np.int64)
        values = np.array([c for _, c in pairs], dtype=np.float64)
        if len(indices):
            values = values * self.idf[indices]
        return SparseVector(indices=indices, values=values, dim=self.dim)


def fit_tfidf(notes: Sequence[ParsedNote], vocab: Vocabulary, dim: int) -> TfidfVectorizer:
    real_words = vocab.words[2:]
    if dim > len(real_words):
        raise ValueError(f"tfidf dim {dim} exceeds vocabulary size {len(real_words)}")
    # Highest document frequency first; vocabulary order breaks ties.
    chosen = sorted(range(len(real_words)), key=lambda i: (-vocab.doc_freq[real_words[i]], i))[:dim]
    feature_words = [real_words[i] for i in sorted(chosen)]
    n = len(notes)
    idf = np.array(
        [max(0.0, np.log(n / (1.0 + vocab.doc_freq[w]))) for w in feature_words]
    )
    return TfidfVectorizer(feature_words=feature_words, idf=idf)


def vectorize_tfidf(
    notes: Sequence[ParsedNote], vocab: Vocabulary, dim: int
) -> list[SparseVector]:
    """Fit TF-IDF statistics on these notes and vectorize them."""
    vec = fit_tfidf(notes, vocab, dim)
    return [vec.transform(note) for note in notes]


def build_med_vocab(notes: Sequence[ParsedNote], min_count: int = 1) -> list[str]:
    """Admission-medication vocabulary: frequency descending, then name."""
    counts: Counter[str] = Counter()
    for note in notes:
        counts.update(note.admission_meds)
    return sorted(
        (m for m, c in counts.items() if c >= min_count),
        key=lambda m: (-counts[m], m),
    )


def admission_med_vector(note: ParsedNote, med_vocab: Sequence[str]) -> np.ndarray:
    """Binary indicator over med_vocab; unseen medications are ignored."""
    vec = np.zeros(len(med_vocab), dtype=np.int8)
    for j, med in enumerate(med_vocab):
        if med in note.admission_meds:
            vec[j] = 1
    return vec


@dataclass
class EncodedExample:
    visit_id: str
    token_indices: np.ndarray
    tfidf: SparseVector
    labels: np.ndarray
    admission_med_vector: np.ndarray


@dataclass
class DatasetSplit:
    train: list
    validation: list
    test: list
    seed: int

    def __iter__(self):
        return iter((self.train, self.validation, self.test))


def split_dataset(examples: Sequence, seed: int) -> DatasetSplit:
    """Deterministic seeded shuffle followed by an 80/10/10 slice."""
    n = len(examples)
    if n < 10:
        raise TooFewExamples(f"need at least 10 examples, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(n * TRAIN_FRACTION)
    n_val = int(n * VALIDATION_FRACTION)
    shuffled = [examples[i] for i in order]
    return DatasetSplit(
        train=shuffled[:n_train],
        validation=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
        seed=seed,
    )


@dataclass
class PreparedData:
    """Encoded splits plus the training-set-fitted artifacts behind them."""

    split: DatasetSplit
    vocab: Vocabulary
    med_vocab: list[str]
    tfidf: TfidfVectorizer
    max_len: int


def encode_note(
    note: ParsedNote,
    vocab: Vocabulary,
    med_vocab: Sequence[str],
    tfidf: TfidfVectorizer,
    max_len: int,
) -> EncodedExample:
    return EncodedExample(
        visit_id=note.visit_id,
        token_indices=encode_tokens(note, vocab, max_len),
        tfidf=tfidf.transform(note),
        labels=np.array(note.labels, dtype=np.int8),
        admission_med_vector=admission_med_vector(note, med_vocab),
    )


def prepare_datasets(
    notes: Sequence[ParsedNote],
    seed: int,
    max_len: int = 500,
    min_count: int = 5,
    tfidf_dim: int | None = 2500,
) -> PreparedData:
    """Split notes, fit vocabularies and TF-IDF on train, encode all splits."""
    note_split = split_dataset(notes, seed)
    vocab = build_vocabulary(note_split.train, min_count=min_count)
    if vocab.size <= 2:
        raise EmptyCorpus("training split produced an empty vocabulary")
    med_vocab = build_med_vocab(note_split.train)
    dim = len(vocab.words) - 2 if tfidf_dim is None else min(tfidf_dim, len(vocab.words) - 2)
    tfidf = fit_tfidf(note_split.train, vocab, dim)
    encoded = DatasetSplit(
        train=[encode_note(n, vocab, med_vocab, tfidf, max_len) for n in note_split.train],
        validation=[encode_note(n, vocab, med_vocab, tfidf, max_len) for n in note_split.validation],
        test=[encode_note(n, vocab, med_vocab, tfidf, max_len) for n in note_split.test],
        seed=seed,
    )
    return PreparedData(split=encoded, vocab=vocab, med_vocab=med_vocab, tfidf=tfidf, max_len=max_len)


# ---------------------------------------------------------------------------
# On-disk dataset format: one directory with meta.json, vocab.tsv,
# med_vocab.txt and {train,validation,test}.jsonl


def save_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, word in enumerate(vocab.words):
            df = vocab.doc_freq.get(word, 0)
            fh.write(f"{word}\t{i}\t{df}\n")


def load_vocabulary(path) -> Vocabulary:
    words, doc_freq = [], {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            word, idx, df = line.rstrip("\n").split("\t")
            assert int(idx) == len(words)
            words.append(word)
            if int(df):
                doc_freq[word] = int(df)
    return Vocabulary(words=words, doc_freq=doc_freq)


def _example_to_dict(ex: EncodedExample) -> dict:
    return {
        "visit_id": ex.visit_id,
        "tokens": ex.token_indices.tolist(),
        "tfidf_indices": ex.tfidf.indices.tolist(),
        "tfidf_values": ex.tfidf.values.tolist(),
        "labels": ex.labels.tolist(),
        "admission_indices": np.flatnonzero(ex.admission_med_vector).tolist(),
    }


def _example_from_dict(obj: dict, tfidf_dim: int, med_dim: int) -> EncodedExample:
    adm = np.zeros(med_dim, dtype=np.int8)
    adm[obj["admission_indices"]] = 1
    return EncodedExample(
        visit_id=obj["visit_id"],
        token_indices=np.array(obj["tokens"], dtype=np.int64),
        tfidf=SparseVector(
            indices=np.array(obj["tfidf_indices"], dtype=np.int64),
            values=np.array(obj["tfidf_values"], dtype=np.float64),
            dim=tfidf_dim,
        ),
        labels=np.array(obj["labels"], dtype=np.int8),
        admission_med_vector=adm,
    )


def save_prepared(data: PreparedData, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    save_vocabulary(data.vocab, os.path.join(out_dir, "vocab.tsv"))
    with open(os.path.join(out_dir, "med_vocab.txt"), "w", encoding="utf-8") as fh:
        fh.write("".join(m + "\n" for m in data.med_vocab))
    meta = {
        "seed": data.split.seed,
        "max_len": data.max_len,
        "tfidf_dim": data.tfidf.dim,
        "tfidf_feature_words": data.tfidf.feature_words,
        "tfidf_idf": data.tfidf.idf.tolist(),
        "num_medications": NUM_MEDICATIONS,
        "sizes": [len(part) for part in data.split],
    }
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
    for name, part in zip(("train", "validation", "test"), data.split):
        with open(os.path.join(out_dir, f"{name}.jsonl"), "w", encoding="utf-8") as fh:
            for ex in part:
                fh.write(json.dumps(_example_to_dict(ex), sort_keys=True) + "\n")


def load_prepared(out_dir) -> PreparedData:
    with open(os.path.join(out_dir, "meta.json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    vocab = load_vocabulary(os.path.join(out_dir, "vocab.tsv"))
    with open(os.path.join(out_dir, "med_vocab.txt"), "r", encoding="utf-8") as fh:
        med_vocab = [line.rstrip("\n") for line in fh if line.strip()]
    tfidf = TfidfVectorizer(
        feature_words=meta["tfidf_feature_words"],
        idf=np.array(meta["tfidf_idf"], dtype=np.float64),
    )
    parts = []
    for name in ("train", "validation", "test"):
        with open(os.path.join(out_dir, f"{name}.jsonl"), "r", encoding="utf-8") as fh:
            parts.append(
                [
                    _example_from_dict(json.loads(line), tfidf.dim, len(med_vocab))
                    for line in fh
                    if line.strip()
                ]
            )
    split = DatasetSplit(train=parts[0], validation=parts[1], test=parts[2], seed=meta["seed"])
    return PreparedData(
        split=split, vocab=vocab, med_vocab=med_vocab, tfidf=tfidf, max_len=meta["max_len"]
    )
