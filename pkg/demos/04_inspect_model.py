#!/usr/bin/env python3
"""Look inside a trained model three different ways.

Trains a small network on a trigger corpus, then:

  1. nearest embedding neighbors for a few planted trigger words,
  2. the n-grams each convolution filter responds to most strongly,
  3. a t-SNE map of the dense note vectors, colored by label.

Artifacts land in demos/output/ as the same CSV files the CLI analyze
command writes.
"""

from pathlib import Path

import numpy as np

from dischargerx import TrainConfig, prepare_datasets, train
from dischargerx.analysis import (
    filter_ngram_report,
    neighbor_report,
    note_vectors,
    tsne,
    write_filter_ngrams_csv,
    write_neighbors_csv,
    write_tsne_csv,
)
from dischargerx.synth import generate_synthetic_corpus, trigger_corpus_spec

OUT = Path(__file__).parent / "output"


def main() -> None:
    notes = generate_synthetic_corpus(trigger_corpus_spec(notes=500), seed=3)
    prepared = prepare_datasets(notes, seed=0, max_len=150, min_count=2, tfidf_dim=200)
    config = TrainConfig(
        embedding_dim=32,
        dense_units=16,
        filters_per_window=6,
        max_epochs=6,
        patience=6,
        batch_size=32,
        seed=0,
    )
    params, _ = train(prepared.split, config, prepared.vocab.size)
    OUT.mkdir(exist_ok=True)

    # 1. Embedding neighbors: the closest other word to each probe by
    # Euclidean distance in the learned embedding. On real notes this
    # surfaces brand/generic pairs; here the probes are trigger tokens.
    probes = [w for w in ("alphax", "betax", "gammax", "deltax") if w in prepared.vocab.words]
    neighbors = neighbor_report(probes, params.embedding.data, prepared.vocab)
    print("nearest embedding neighbors:")
    for entry in neighbors.entries:
        print(f"  {entry.query:22s} -> {entry.neighbor:22s} (dist {entry.distance:.3f})")
    write_neighbors_csv(neighbors, OUT / "neighbors.csv")

    # 2. What each filter fires on. On a trigger corpus the top windows
    # are usually the planted phrases themselves.
    ngrams = filter_ngram_report(params, prepared.split.validation, prepared.vocab, top_n=3)
    print("\nstrongest window for the first two filters per width:")
    for f in ngrams.filters:
        if f.filter_id % config.filters_per_window > 1:
            continue
        text, value = f.ngrams[0]
        print(f"  filter {f.filter_id:3d} (width {f.window})  {value:6.2f}  '{text}'")
    write_filter_ngrams_csv(ngrams, OUT / "filter_ngrams.csv")

    # 3. Note map. Dense activations are the model's whole-note summary;
    # t-SNE squashes them to 2-D for plotting.
    examples = prepared.split.test + prepared.split.validation
    vectors = note_vectors(params, examples)
    labels = np.stack([ex.labels for ex in examples])
    embedding = tsne(vectors, perplexity=12, iters=400, seed=0, labels=labels)
    print(f"\nt-SNE on {len(examples)} notes: KL {embedding.kl_initial:.3f} -> {embedding.kl_final:.3f}")
    write_tsne_csv(embedding, [ex.visit_id for ex in examples], OUT / "tsne.csv")

    print(f"\nwrote neighbors.csv, filter_ngrams.csv, tsne.csv to {OUT}")


if __name__ == "__main__":
    main()
