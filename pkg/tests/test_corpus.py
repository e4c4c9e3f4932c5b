import numpy as np

from maskdna.corpus import MOTIF, TRANSITIONS, contains_motif, motif_corpus, reverse_complement, stationary, \
    uniform_sequences
from maskdna.metrics import gc_ratio


def test_motif_is_palindromic():
    assert reverse_complement(MOTIF) == MOTIF


def test_transition_rows_are_distributions():
    assert np.allclose(TRANSITIONS.sum(axis=1), 1.0)
    pi = stationary()
    assert np.allclose(pi @ TRANSITIONS, pi)


def test_every_sequence_carries_an_aligned_motif():
    seqs = motif_corpus(50, 576, seed=1)
    assert all(len(s) == 576 for s in seqs)
    assert all(contains_motif(s) for s in seqs)
    assert all(s.find(MOTIF) % 6 == 0 for s in seqs)


def test_splits_are_independent_and_reproducible():
    a = motif_corpus(5, 120, seed=0, split=0)
    assert a == motif_corpus(5, 120, seed=0, split=0)
    assert a != motif_corpus(5, 120, seed=0, split=1)


def test_uniform_sequences_rarely_contain_motif():
    seqs = uniform_sequences(200, 576, seed=2)
    assert np.mean([contains_motif(s) for s in seqs]) < 0.05


def test_grammar_gc_ratio_near_one():
    s = "".join(motif_corpus(20, 576, seed=3))
    assert 0.9 < gc_ratio(s) < 1.1
