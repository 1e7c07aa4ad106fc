"""Evaluation scores and label-association measures.

Scoring follows the multi-label convention used throughout: one binary
decision per medication per visit.  The micro average is the
frequency-weighted mean of the class-wise scores (weights are the
positive-label counts); the conventional pooled-confusion micro is also
computed under its own name since the two disagree in general.  Any 0/0
ratio is defined as 0.

Association measures over the label matrix: pairwise PMI uses the raw
count ratio n(i,j) / (n(i) * n(j)) under a natural log, with no
corpus-size term; pairs that never co-occur are flagged undefined rather
than given a value.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .notes import Medication


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float


def _ratio(num: int | float, den: int | float) -> float:
    return num / den if den else 0.0


def confusion(predicted, actual, index: int) -> ConfusionCounts:
    p = np.asarray(predicted)[:, index].astype(bool)
    a = np.asarray(actual)[:, index].astype(bool)
    return ConfusionCounts(
        tp=int((p & a).sum()),
        fp=int((p & ~a).sum()),
        fn=int((~p & a).sum()),
        tn=int((~p & ~a).sum()),
    )


def prf_from_counts(c: ConfusionCounts) -> Scores:
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    return Scores(precision, recall, f1)


def class_prf(predicted, actual, index: int) -> Scores:
    """Precision, recall and F1 of one medication's binary decisions."""
    return prf_from_counts(confusion(predicted, actual, index))


def macro_average(class_scores: list[Scores]) -> Scores:
    n = len(class_scores)
    return Scores(
        precision=sum(s.precision for s in class_scores) / n,
        recall=sum(s.recall for s in class_scores) / n,
        f1=sum(s.f1 for s in class_scores) / n,
    )


def micro_average(class_scores: list[Scores], frequencies) -> Scores:
    """Frequency-weighted mean of class-wise scores (weights are the
    positive-label counts of the evaluated set)."""
    weights = [float(w) for w in frequencies]
    total = sum(weights)
    if not total:
        return Scores(0.0, 0.0, 0.0)
    return Scores(
        precision=sum(w * s.precision for w, s in zip(weights, class_scores)) / total,
        recall=sum(w * s.recall for w, s in zip(weights, class_scores)) / total,
        f1=sum(w * s.f1 for w, s in zip(weights, class_scores)) / total,
    )


def pooled_micro(predicted, actual) -> Scores:
    """Conventional micro average: pool every (visit, medication) decision
    into one confusion matrix, then score it."""
    p = np.asarray(predicted).astype(bool)
    a = np.asarray(actual).astype(bool)
    pooled = ConfusionCounts(
        tp=int((p & a).sum()),
        fp=int((p & ~a).sum()),
        fn=int((~p & a).sum()),
        tn=int((~p & ~a).sum()),
    )
    return prf_from_counts(pooled)


@dataclass
class MetricsReport:
    per_class: list[Scores]
    counts: list[ConfusionCounts]
    frequencies: list[int]
    macro: Scores
    micro: Scores
    pooled: Scores

    def to_dict(self) -> dict:
        def scores(s: Scores) -> dict:
            return {"precision": s.precision, "recall": s.recall, "f1": s.f1}

        return {
            "per_class": {
                Medication(i).generic_name: {**scores(s), "support": self.frequencies[i]}
                for i, s in enumerate(self.per_class)
            },
            "macro": scores(self.macro),
            "micro": scores(self.micro),
            "pooled_micro": scores(self.pooled),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["medication", "precision", "recall", "f1", "support"])
        for i, s in enumerate(self.per_class):
            writer.writerow(
                [Medication(i).generic_name, f"{s.precision:.6f}", f"{s.recall:.6f}", f"{s.f1:.6f}", self.frequencies[i]]
            )
        for name, s in (("micro", self.micro), ("macro", self.macro), ("pooled_micro", self.pooled)):
            writer.writerow([name, f"{s.precision:.6f}", f"{s.recall:.6f}", f"{s.f1:.6f}", sum(self.frequencies)])
        return buf.getvalue()

    def to_table(self) -> str:
        """Aligned text: medications as columns, P/R/F1 as rows."""
        names = [Medication(i).generic_name for i in range(len(self.per_class))] + ["micro", "macro"]
        width = max(len(n) for n in names) + 2
        header = "measure".ljust(10) + "".join(n.rjust(width) for n in names)
        rows = [header]
        for label, attr in (("precision", "precision"), ("recall", "recall"), ("f1", "f1")):
            values = [getattr(s, attr) for s in self.per_class]
            values += [getattr(self.micro, attr), getattr(self.macro, attr)]
            rows.append(label.ljust(10) + "".join(f"{v:.2f}".rjust(width) for v in values))
        return "\n".join(rows)


def score_predictions(actual, predicted) -> MetricsReport:
    """Score a [visits, medications] binary prediction matrix."""
    actual = np.asarray(actual)
    predicted = np.asarray(predicted)
    if actual.shape != predicted.shape:
        raise ValueError(f"shape mismatch: labels {actual.shape} vs predictions {predicted.shape}")
    k = actual.shape[1]
    counts = [confusion(predicted, actual, i) for i in range(k)]
    per_class = [prf_from_counts(c) for c in counts]
    frequencies = [c.tp + c.fn for c in counts]
    return MetricsReport(
        per_class=per_class,
        counts=counts,
        frequencies=frequencies,
        macro=macro_average(per_class),
        micro=micro_average(per_class, frequencies),
        pooled=pooled_micro(predicted, actual),
    )


# -- pointwise mutual information -----------------------------------------------


@dataclass
class PmiMatrix:
    values: np.ndarray  # [k, k] floats, 0.0 where undefined
    defined: np.ndarray  # [k, k] bool; diagonal always False
    pair_counts: np.ndarray  # [k, k] ints, n(i, j)
    counts: np.ndarray  # [k] ints, n(i)

    def to_dict(self) -> dict:
        k = self.values.shape[0]
        return {
            "values": [[self.values[i, j] for j in range(k)] for i in range(k)],
            "defined": [[bool(self.defined[i, j]) for j in range(k)] for i in range(k)],
            "pair_counts": self.pair_counts.tolist(),
            "counts": self.counts.tolist(),
        }


def pmi(labels) -> PmiMatrix:
    """Pairwise PMI over a [visits, medications] binary label matrix.

    pmi(i, j) = ln(n(i,j) / (n(i) * n(j))) with raw visit counts; the
    diagonal is ignored and never-co-occurring pairs stay undefined.
    """
    labels = np.asarray(labels, dtype=np.int64)
    k = labels.shape[1]
    counts = labels.sum(axis=0)
    pair_counts = labels.T @ labels
    values = np.zeros((k, k))
    defined = np.zeros((k, k), dtype=bool)
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            nij = int(pair_counts[i, j])
            ni, nj = int(counts[i]), int(counts[j])
            if nij > 0:
                values[i, j] = math.log(nij / (ni * nj))
                defined[i, j] = True
    return PmiMatrix(values=values, defined=defined, pair_counts=pair_counts, counts=counts)


# -- correlation vs PMI ranking comparison ----------------------------------------


@dataclass
class MedRanking:
    med: int
    corr_order: list[int]  # the other medications, best first
    pmi_order: list[int]
    spearman: float
    spearman_defined: bool
    top_agree: bool


@dataclass
class RankComparison:
    rankings: list[MedRanking]
    top1_agreement: int  # medications whose top partner matches, out of k

    def to_dict(self) -> dict:
        return {
            "top1_agreement": self.top1_agreement,
            "medications": {
                Medication(r.med).generic_name: {
                    "corr_order": [Medication(j).generic_name for j in r.corr_order],
                    "pmi_order": [Medication(j).generic_name for j in r.pmi_order],
                    "spearman": r.spearman,
                    "spearman_defined": r.spearman_defined,
                    "top_agree": r.top_agree,
                }
                for r in self.rankings
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        """Two ranked partner columns per medication, strongest first."""
        lines = []
        for r in self.rankings:
            med = Medication(r.med).generic_name
            lines.append(f"{med}  (spearman {r.spearman:+.2f}, top {'agree' if r.top_agree else 'differ'})")
            lines.append(f"{'rank':>4}  {'by correlation':<22}{'by pmi':<22}")
            for rank, (a, b) in enumerate(zip(r.corr_order, r.pmi_order), start=1):
                lines.append(
                    f"{rank:>4}  {Medication(a).generic_name:<22}{Medication(b).generic_name:<22}"
                )
            lines.append("")
        return "\n".join(lines)


def _ranked_others(scores: np.ndarray, defined: np.ndarray, med: int) -> list[int]:
    others = [j for j in range(scores.shape[0]) if j != med]
    # Undefined partners sink below every defined one; index breaks ties.
    return sorted(others, key=lambda j: (not defined[med, j], -scores[med, j], j))


def rank_comparison(
    corr: np.ndarray,
    pmi_matrix: PmiMatrix,
    corr_defined: np.ndarray | None = None,
) -> RankComparison:
    """Compare, per medication, how correlation and PMI rank the other
    medications; reports per-medication Spearman rank correlation between
    the two orderings and the number of top-1 agreements."""
    corr = np.asarray(corr, dtype=np.float64)
    k = corr.shape[0]
    if corr_defined is None:
        corr_defined = np.ones((k, k), dtype=bool)
    rankings = []
    agreement = 0
    for med in range(k):
        corr_order = _ranked_others(corr, corr_defined, med)
        pmi_order = _ranked_others(pmi_matrix.values, pmi_matrix.defined, med)
        others = [j for j in range(k) if j != med]
        lo_c = corr[med][others].min() - 1.0 if others else 0.0
        lo_p = (
            pmi_matrix.values[med][others].min() - 1.0 if others else 0.0
        )
        corr_vec = [corr[med, j] if corr_defined[med, j] else lo_c for j in others]
        pmi_vec = [pmi_matrix.values[med, j] if pmi_matrix.defined[med, j] else lo_p for j in others]
        with warnings.catch_warnings():
            # constant inputs yield nan, reported as spearman_defined=False
            warnings.simplefilter("ignore", stats.ConstantInputWarning)
            rho = stats.spearmanr(corr_vec, pmi_vec).statistic
        ok = bool(np.isfinite(rho))
        agree = bool(corr_order and pmi_order and corr_order[0] == pmi_order[0])
        if agree:
            agreement += 1
        rankings.append(
            MedRanking(
                med=med,
                corr_order=corr_order,
                pmi_order=pmi_order,
                spearman=float(rho) if ok else 0.0,
                spearman_defined=ok,
                top_agree=agree,
            )
        )
    return RankComparison(rankings=rankings, top1_agreement=agreement)


__all__ = [
    "ConfusionCounts",
    "MedRanking",
    "MetricsReport",
    "PmiMatrix",
    "RankComparison",
    "Scores",
    "class_prf",
    "confusion",
    "macro_average",
    "micro_average",
    "pmi",
    "pooled_micro",
    "prf_from_counts",
    "rank_comparison",
    "score_predictions",
]
