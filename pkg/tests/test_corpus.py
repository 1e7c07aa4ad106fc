import math
from collections import Counter

import numpy as np
import pytest

from conftest import make_parsed_note
from dischargerx.corpus import (
    PAD_INDEX,
    PAD_TOKEN,
    UNK_INDEX,
    UNK_TOKEN,
    EmptyCorpus,
    TooFewExamples,
    admission_med_vector,
    build_med_vocab,
    build_vocabulary,
    encode_tokens,
    fit_tfidf,
    load_prepared,
    prepare_datasets,
    save_prepared,
    split_dataset,
)
from dischargerx.synth import generate_synthetic_corpus, trigger_corpus_spec


def notes_from_token_lists(token_lists):
    return [make_parsed_note(f"v{i}", toks) for i, toks in enumerate(token_lists)]


# -- vocabulary -----------------------------------------------------------


def test_vocabulary_reserved_slots():
    notes = notes_from_token_lists([["alpha"] * 5, ["beta"] * 5])
    vocab = build_vocabulary(notes, min_count=5)
    assert vocab.words[PAD_INDEX] == PAD_TOKEN
    assert vocab.words[UNK_INDEX] == UNK_TOKEN
    assert vocab.lookup("alpha") >= 2
    assert vocab.lookup("never-seen") == UNK_INDEX


def test_vocabulary_order_frequency_then_lexicographic():
    notes = notes_from_token_lists([["b"] * 3 + ["a"] * 3 + ["c"] * 7])
    vocab = build_vocabulary(notes, min_count=1)
    assert vocab.words[2:] == ["c", "a", "b"]


def test_vocabulary_min_count_filters():
    notes = notes_from_token_lists([["kept"] * 5 + ["dropped"] * 4])
    vocab = build_vocabulary(notes, min_count=5)
    assert "kept" in vocab.words
    assert "dropped" not in vocab.words


def test_vocabulary_permutation_invariance():
    token_lists = [["x", "y"], ["y", "z"], ["z", "z", "q"]]
    a = build_vocabulary(notes_from_token_lists(token_lists), min_count=1)
    b = build_vocabulary(notes_from_token_lists(token_lists[::-1]), min_count=1)
    assert a.words == b.words
    assert a.doc_freq == b.doc_freq


def test_vocabulary_empty_corpus_raises():
    with pytest.raises(EmptyCorpus):
        build_vocabulary([], min_count=1)


def test_document_frequency_counts_notes_not_tokens():
    notes = notes_from_token_lists([["w", "w", "w"], ["w"]])
    vocab = build_vocabulary(notes, min_count=1)
    assert vocab.doc_freq["w"] == 2


# -- encoding -------------------------------------------------------------


def test_encode_tokens_length_truncate_pad():
    notes = notes_from_token_lists([["a"] * 5, ["b"] * 5])
    vocab = build_vocabulary(notes, min_count=5)
    note = make_parsed_note("v", ["a", "b", "zzz"])
    enc = encode_tokens(note, vocab, max_len=5)
    assert enc.shape == (5,)
    assert enc[0] == vocab.lookup("a")
    assert enc[2] == UNK_INDEX
    assert list(enc[3:]) == [PAD_INDEX, PAD_INDEX]
    enc2 = encode_tokens(note, vocab, max_len=2)
    assert list(enc2) == [vocab.lookup("a"), vocab.lookup("b")]


def test_encode_tokens_rejects_bad_length():
    notes = notes_from_token_lists([["a"] * 5])
    vocab = build_vocabulary(notes, min_count=1)
    with pytest.raises(ValueError):
        encode_tokens(make_parsed_note("v", ["a"]), vocab, max_len=0)


# -- tf-idf ---------------------------------------------------------------


def brute_force_tfidf(token_lists, feature_words):
    """Reference: tf = raw count, idf = max(0, ln(N / (1 + df)))."""
    n = len(token_lists)
    df = {w: sum(w in set(toks) for toks in token_lists) for w in feature_words}
    out = []
    for toks in token_lists:
        counts = Counter(toks)
        row = [
            counts[w] * max(0.0, math.log(n / (1.0 + df[w])))
            for w in feature_words
        ]
        out.append(row)
    return np.array(out)


def test_tfidf_matches_brute_force_exactly():
    token_lists = [
        ["aa", "bb", "aa", "cc"],
        ["bb", "cc", "cc"],
        ["aa", "dd", "dd", "dd", "cc"],
        ["ee", "aa"],
        ["bb", "bb", "aa"],
    ]
    notes = notes_from_token_lists(token_lists)
    vocab = build_vocabulary(notes, min_count=1)
    vec = fit_tfidf(notes, vocab, dim=4)
    expected = brute_force_tfidf(token_lists, vec.feature_words)
    got = np.stack([vec.transform(n).to_dense() for n in notes])
    assert np.array_equal(got, expected)


def test_tfidf_selects_highest_document_frequency():
    token_lists = [["common", "rare"], ["common"], ["common"], ["other", "rare"]]
    notes = notes_from_token_lists(token_lists)
    vocab = build_vocabulary(notes, min_count=1)
    vec = fit_tfidf(notes, vocab, dim=2)
    assert "common" in vec.feature_words
    assert "rare" in vec.feature_words  # df 2 beats df 1


def test_tfidf_idf_clamped_nonnegative():
    # a word present in every note has idf ln(N/(N+1)) < 0 -> clamped to 0
    token_lists = [["ubiq", f"u{i}"] for i in range(4)]
    notes = notes_from_token_lists(token_lists)
    vocab = build_vocabulary(notes, min_count=1)
    vec = fit_tfidf(notes, vocab, dim=vec_dim(vocab))
    j = vec.feature_words.index("ubiq")
    assert vec.idf[j] == 0.0
    assert (vec.idf >= 0).all()


def vec_dim(vocab):
    return len(vocab.words) - 2


def test_tfidf_dim_too_large_raises():
    notes = notes_from_token_lists([["a", "b"]])
    vocab = build_vocabulary(notes, min_count=1)
    with pytest.raises(ValueError):
        fit_tfidf(notes, vocab, dim=50)


def test_tfidf_unknown_words_are_ignored():
    notes = notes_from_token_lists([["a", "b"], ["a", "c"]])
    vocab = build_vocabulary(notes, min_count=1)
    vec = fit_tfidf(notes, vocab, dim=2)
    sv = vec.transform(make_parsed_note("v", ["zzz", "a"]))
    dense = sv.to_dense()
    assert dense.shape == (2,)
    assert np.count_nonzero(dense) <= 1


# -- admission medication vector -------------------------------------------


def test_med_vocab_order_and_vector():
    notes = [
        make_parsed_note("a", ["x"], admission_meds=("aspirin", "insulin")),
        make_parsed_note("b", ["x"], admission_meds=("aspirin",)),
    ]
    mv = build_med_vocab(notes)
    assert mv == ["aspirin", "insulin"]
    vec = admission_med_vector(notes[1], mv)
    assert list(vec) == [1, 0]


def test_admission_med_vector_ignores_unseen():
    note = make_parsed_note("a", ["x"], admission_meds=("novel",))
    assert list(admission_med_vector(note, ["aspirin"])) == [0]
    assert list(admission_med_vector(make_parsed_note("b", ["x"]), ["aspirin"])) == [0]


# -- splitting --------------------------------------------------------------


def test_split_sizes_exact():
    split = split_dataset(list(range(10)), seed=0)
    assert (len(split.train), len(split.validation), len(split.test)) == (8, 1, 1)
    big = split_dataset(list(range(25000)), seed=3)
    assert (len(big.train), len(big.validation), len(big.test)) == (20000, 2500, 2500)


def test_split_is_a_partition():
    items = list(range(137))
    split = split_dataset(items, seed=9)
    combined = split.train + split.validation + split.test
    assert sorted(combined) == items
    assert len(set(combined)) == len(items)


def test_split_determinism_and_seed_sensitivity():
    items = list(range(50))
    a = split_dataset(items, seed=4)
    b = split_dataset(items, seed=4)
    c = split_dataset(items, seed=5)
    assert a.train == b.train and a.validation == b.validation and a.test == b.test
    assert a.train != c.train


def test_split_too_few_examples():
    with pytest.raises(TooFewExamples):
        split_dataset(list(range(9)), seed=0)


# -- end-to-end preparation -------------------------------------------------


@pytest.fixture(scope="module")
def small_corpus():
    return generate_synthetic_corpus(trigger_corpus_spec(120), seed=5)


def test_prepare_datasets_fits_on_train_only(small_corpus):
    prepared = prepare_datasets(small_corpus, seed=1, max_len=80, min_count=3, tfidf_dim=20)
    split = split_dataset(small_corpus, seed=1)
    train_only_vocab = build_vocabulary(split.train, min_count=3)
    assert prepared.vocab.words == train_only_vocab.words
    assert len(prepared.split.train) == 96
    assert all(ex.token_indices.shape == (80,) for ex in prepared.split.train)
    assert all(ex.tfidf.dim == 20 for ex in prepared.split.test)


def test_prepare_datasets_labels_align(small_corpus):
    prepared = prepare_datasets(small_corpus, seed=1, max_len=80, min_count=3, tfidf_dim=20)
    split = split_dataset(small_corpus, seed=1)
    for note, ex in zip(split.test, prepared.split.test):
        assert ex.visit_id == note.visit_id
        assert tuple(ex.labels) == note.labels


def test_save_load_prepared_round_trip(tmp_path, small_corpus):
    prepared = prepare_datasets(small_corpus, seed=2, max_len=60, min_count=3, tfidf_dim=15)
    out = tmp_path / "prepared"
    save_prepared(prepared, out)
    back = load_prepared(out)
    assert back.vocab.words == prepared.vocab.words
    assert back.vocab.doc_freq == prepared.vocab.doc_freq
    assert back.med_vocab == prepared.med_vocab
    assert back.max_len == prepared.max_len
    assert np.array_equal(back.tfidf.idf, prepared.tfidf.idf)
    for part_a, part_b in zip(back.split, prepared.split):
        assert len(part_a) == len(part_b)
        for ea, eb in zip(part_a, part_b):
            assert ea.visit_id == eb.visit_id
            assert np.array_equal(ea.token_indices, eb.token_indices)
            assert np.array_equal(ea.labels, eb.labels)
            assert np.array_equal(ea.tfidf.to_dense(), eb.tfidf.to_dense())
            assert np.array_equal(ea.admission_med_vector, eb.admission_med_vector)
