import numpy as np
import pytest

from dischargerx.notes import Medication, RawNote, SectionType, parse_note
from dischargerx.synth import (
    DEFAULT_TRIGGERS,
    InvalidSpec,
    MedSpec,
    PairSpec,
    SyntheticSpec,
    alias_coverage_corpus,
    correlated_pair_spec,
    generate_synthetic_corpus,
    identity_corpus_spec,
    load_spec,
    render_note_text,
    save_spec,
    trigger_corpus_spec,
)


def test_generation_is_deterministic():
    spec = trigger_corpus_spec(40)
    a = generate_synthetic_corpus(spec, seed=3)
    b = generate_synthetic_corpus(spec, seed=3)
    assert a == b
    c = generate_synthetic_corpus(spec, seed=4)
    assert a != c


def test_labels_never_all_zero():
    notes = generate_synthetic_corpus(trigger_corpus_spec(300), seed=1)
    assert all(any(n.labels) for n in notes)


def test_triggers_appear_iff_label_set():
    spec = trigger_corpus_spec(200)
    notes = generate_synthetic_corpus(spec, seed=7)
    for note in notes:
        for i, med in enumerate(spec.meds):
            present = any(t in note.tokens for t in med.triggers)
            assert present == bool(note.labels[i]), (note.visit_id, med.name)


def test_pair_co_occurrence_rate():
    # p(both)=0.9 requested; Monte-Carlo rate over 5000 notes within 0.05
    spec = correlated_pair_spec(5000)
    notes = generate_synthetic_corpus(spec, seed=11)
    labels = np.array([n.labels for n in notes])
    co_rate = float((labels[:, 2] & labels[:, 3]).mean())
    assert abs(co_rate - 0.9) < 0.05


def test_marginal_probabilities_track_spec():
    spec = trigger_corpus_spec(4000)
    notes = generate_synthetic_corpus(spec, seed=2)
    labels = np.array([n.labels for n in notes])
    for i, med in enumerate(spec.meds):
        assert abs(labels[:, i].mean() - med.prob) < 0.04, med.name


def test_identity_corpus_mirrors_admission_meds():
    notes = generate_synthetic_corpus(identity_corpus_spec(100), seed=9)
    for note in notes:
        positives = {Medication(i).generic_name for i, b in enumerate(note.labels) if b}
        assert note.admission_meds == frozenset(positives)


def test_render_round_trip():
    spec = trigger_corpus_spec(50)
    notes = generate_synthetic_corpus(spec, seed=13)
    rng = np.random.default_rng(0)
    for note in notes:
        raw = RawNote(note.visit_id, render_note_text(note, rng))
        back = parse_note(raw)
        assert back is not None
        assert back.labels == note.labels
        assert back.tokens == note.tokens
        assert back.admission_meds == note.admission_meds


def test_spec_json_round_trip(tmp_path):
    spec = correlated_pair_spec(123)
    path = tmp_path / "spec.json"
    save_spec(spec, path)
    back = load_spec(path)
    assert back.to_dict() == spec.to_dict()


def test_invalid_probability_rejected():
    spec = trigger_corpus_spec(10)
    spec.meds[0].prob = 1.5
    with pytest.raises(InvalidSpec):
        spec.validate()


def test_invalid_pair_mass_rejected():
    spec = trigger_corpus_spec(10)
    spec.pairs = [PairSpec(first=0, second=1, p_both=0.8, p_first_only=0.3, p_second_only=0.1)]
    with pytest.raises(InvalidSpec):
        spec.validate()


def test_overlapping_pairs_rejected():
    spec = trigger_corpus_spec(10)
    spec.pairs = [
        PairSpec(first=0, second=1, p_both=0.5, p_first_only=0.1, p_second_only=0.1),
        PairSpec(first=1, second=2, p_both=0.5, p_first_only=0.1, p_second_only=0.1),
    ]
    with pytest.raises(InvalidSpec):
        spec.validate()


def test_spec_needs_eight_unique_meds():
    spec = trigger_corpus_spec(10)
    spec.meds = spec.meds[:7]
    with pytest.raises(InvalidSpec):
        spec.validate()
    spec = trigger_corpus_spec(10)
    spec.meds[1] = MedSpec(name=spec.meds[0].name, prob=0.5, triggers=["zz"])
    with pytest.raises(InvalidSpec):
        spec.validate()


def test_default_triggers_are_distinct_nonwords():
    assert len(set(DEFAULT_TRIGGERS)) == 8
    for t in DEFAULT_TRIGGERS:
        assert t.isalpha() and t == t.lower()


def test_notes_have_all_admission_sections():
    notes = generate_synthetic_corpus(trigger_corpus_spec(20), seed=21)
    for note in notes:
        assert SectionType.HISTORY_PRESENT_ILLNESS in note.sections
        assert SectionType.ADMISSION_MEDICATIONS in note.sections
        assert SectionType.DISCHARGE_MEDICATIONS in note.sections


def test_alias_coverage_corpus_is_deterministic():
    a = alias_coverage_corpus()
    b = alias_coverage_corpus()
    assert [(r.visit_id, r.text) for r, _ in a] == [(r.visit_id, r.text) for r, _ in b]


def test_synthetic_spec_rejects_empty_distribution():
    meds = [MedSpec(name=m.generic_name, prob=0.0, triggers=[t])
            for m, t in zip(Medication, DEFAULT_TRIGGERS)]
    spec = SyntheticSpec(notes=10, meds=meds)
    with pytest.raises(InvalidSpec):
        spec.validate()
