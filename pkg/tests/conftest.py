import numpy as np
import pytest

from dischargerx.corpus import EncodedExample, SparseVector
from dischargerx.notes import NUM_MEDICATIONS, ParsedNote, SectionType


def make_parsed_note(visit_id, tokens, labels=None, admission_meds=()):
    """Hand-rolled ParsedNote for unit tests that skip raw-text parsing."""
    if labels is None:
        labels = (1,) + (0,) * (NUM_MEDICATIONS - 1)
    return ParsedNote(
        visit_id=visit_id,
        sections={SectionType.HISTORY_PRESENT_ILLNESS: " ".join(tokens)},
        tokens=tuple(tokens),
        admission_meds=frozenset(admission_meds),
        labels=tuple(labels),
    )


def make_example(visit_id, indices, labels, max_len=None, tfidf_dim=4):
    indices = np.asarray(indices, dtype=np.int64)
    if max_len is not None and len(indices) < max_len:
        indices = np.concatenate([indices, np.zeros(max_len - len(indices), dtype=np.int64)])
    return EncodedExample(
        visit_id=visit_id,
        token_indices=indices,
        tfidf=SparseVector(np.array([], dtype=np.int64), np.array([]), tfidf_dim),
        labels=np.asarray(labels, dtype=np.int8),
        admission_med_vector=np.zeros(3, dtype=np.int8),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
