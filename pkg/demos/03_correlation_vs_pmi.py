#!/usr/bin/env python3
"""Recover a planted medication co-occurrence from the factor head.

The model's output layer is y = mu + loading @ x, so the covariance of
the predicted logits over a dataset is loading @ cov(x) @ loading.T.
Normalizing gives a medication correlation matrix learned entirely from
text. To check it means something, this demo plants one strongly
co-prescribed pair (lisinopril and amlodipine, 90 percent together) in
a synthetic corpus, trains, and compares the model correlations against
pointwise mutual information computed from the raw label counts.

PMI sees the labels directly, the model only sees admission text, so
agreement between the two rankings is evidence the text carries the
co-prescription signal. Expect the top pairing to match; the unplanted
medications are independent by construction, so their rank agreement is
sampling noise and varies run to run.
"""

import numpy as np

from dischargerx import Medication, TrainConfig, prepare_datasets, train
from dischargerx.metrics import pmi, rank_comparison
from dischargerx.model import medication_covariance
from dischargerx.synth import correlated_pair_spec, generate_synthetic_corpus


def main() -> None:
    spec = correlated_pair_spec(notes=800)
    notes = generate_synthetic_corpus(spec, seed=6)
    prepared = prepare_datasets(notes, seed=0, max_len=200, min_count=5, tfidf_dim=None)
    split = prepared.split

    # A linear head with dropout off tracks small correlations best; relu
    # and dropout distort the covariance the factor head exposes.
    config = TrainConfig(
        embedding_dim=48,
        dense_units=24,
        filters_per_window=16,
        activation="identity",
        keep_rate=1.0,
        l2=1e-4,
        max_epochs=15,
        patience=15,
        seed=2,
    )
    params, _ = train(split, config, prepared.vocab.size)

    cov = medication_covariance(params, split.train)
    pair = Medication.LISINOPRIL, Medication.AMLODIPINE
    r = cov.correlation[pair[0], pair[1]]
    print(f"model correlation {pair[0].generic_name}/{pair[1].generic_name}: {r:+.3f}")

    print("\nstrongest model pairs:")
    for i, j, value in cov.pairs_by_correlation()[:3]:
        print(f"  {Medication(i).generic_name:14s} {Medication(j).generic_name:14s} {value:+.3f}")

    labels = np.stack([ex.labels for ex in split.train])
    comparison = rank_comparison(cov.correlation, pmi(labels), cov.defined)
    print("\nrank agreement, model correlation vs label PMI:")
    print(comparison.to_table())
    print(f"top-1 partner agreement: {comparison.top1_agreement}/8")


if __name__ == "__main__":
    main()
