"""Exact conditional-count predictor for enumerable (L, V) instances."""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from ..seqio import TokenSequence, Vocabulary
from .base import MaskPredictor

SMOOTHING = 1e-9
MAX_STATES = 200_000


class TabularPredictor(MaskPredictor):
    """Lookup table from every masked state of length L to its L x V probability rows.

    Masked positions carry the empirical conditional of the clean token given
    the unmasked context; unmasked positions are one-hot on the observed token.
    Special-token columns always carry zero mass.
    """

    def __init__(self, table: dict[tuple, np.ndarray], L: int, vocab: Vocabulary):
        self.table = table
        self.L = L
        self.vocab = vocab
        self.vocab_size = vocab.size

    def probs(self, ids) -> np.ndarray:
        key = tuple(int(i) for i in ids)
        try:
            return self.table[key]
        except KeyError:
            raise KeyError(f"state {key} is not covered by this tabular predictor") from None

    def log_probs_batch(self, ids):
        ids = np.asarray(ids)
        with np.errstate(divide="ignore"):
            return np.log(np.stack([self.probs(row) for row in ids]))


def fit_tabular(corpus: Sequence, L: int, vocab: Vocabulary, alpha: float = SMOOTHING) -> TabularPredictor:
    """Tabulate p(x0_i | unmasked context) by counting over ``corpus`` with add-alpha smoothing."""
    V = vocab.n_kmers
    data = np.stack([np.asarray(x.ids if isinstance(x, TokenSequence) else x, dtype=np.int64) for x in corpus])
    if data.ndim != 2 or data.shape[1] != L:
        raise ValueError(f"corpus sequences must all have token length {L}")
    if np.any((data < 0) | (data >= V)):
        raise ValueError("corpus contains non k-mer ids")
    if (V + 1) ** L > MAX_STATES:
        raise ValueError(f"(V+1)^L = {(V + 1) ** L} states is too many to tabulate")

    table = {}
    for state in itertools.product(list(range(V)) + [vocab.mask_id], repeat=L):
        st = np.array(state)
        visible = st != vocab.mask_id
        match = np.all(data[:, visible] == st[visible], axis=1)
        hits = data[match]
        rows = np.zeros((L, vocab.size))
        for i in range(L):
            if visible[i]:
                rows[i, st[i]] = 1.0
            else:
                counts = np.bincount(hits[:, i], minlength=V).astype(float) + alpha
                rows[i, :V] = counts / counts.sum()
        table[state] = rows
    return TabularPredictor(table, L, vocab)
