"""Synthetic motif corpus used for training demos and acceptance runs.

Grammar: each sequence is ``length`` bases drawn from a first-order Markov
chain over ``ACGT`` (``TRANSITIONS``, started from its stationary
distribution); then one copy of the reverse-complement palindrome ``MOTIF``
is written over the background at an offset drawn uniformly from the
multiples of ``align`` that fit. With ``align`` equal to the tokenizer's k the motif always
occupies whole tokens.
"""

from __future__ import annotations

import numpy as np

from .rng import make_rng
from .seqio import BASES

MOTIF = "GAATTCGAATTC"  # two EcoRI sites back to back; its own reverse complement

# rows: current base A, C, G, T; columns: next base. Each base is followed by
# its successor in the cycle A -> C -> G -> T -> A with probability 0.9, which
# keeps the background entropy low (about 0.43 nats per base) while the
# stationary distribution stays uniform.
ADVANCE_P = 0.9
TRANSITIONS = np.full((4, 4), (1 - ADVANCE_P) / 3)
TRANSITIONS[np.arange(4), (np.arange(4) + 1) % 4] = ADVANCE_P

COMPLEMENT = str.maketrans("ACGT", "TGCA")


def reverse_complement(s: str) -> str:
    return s.translate(COMPLEMENT)[::-1]


def stationary(P: np.ndarray = TRANSITIONS) -> np.ndarray:
    w, v = np.linalg.eig(P.T)
    pi = np.real(v[:, np.argmin(np.abs(w - 1.0))])
    return pi / pi.sum()


def markov_background(length: int, rng: np.random.Generator, P: np.ndarray = TRANSITIONS) -> str:
    cdf = np.cumsum(P, axis=1)
    u = rng.random(length)
    out = np.empty(length, dtype=np.int64)
    out[0] = int(np.searchsorted(np.cumsum(stationary(P)), u[0] * 1.0, side="right"))
    for i in range(1, length):
        out[i] = int(np.searchsorted(cdf[out[i - 1]], u[i], side="right"))
    out = np.minimum(out, 3)
    return "".join(BASES[j] for j in out)


def motif_sequence(length: int, rng: np.random.Generator, motif: str = MOTIF, align: int = 6,
                   P: np.ndarray = TRANSITIONS) -> str:
    bg = markov_background(length, rng, P)
    slots = (length - len(motif)) // align + 1
    if slots < 1:
        raise ValueError(f"length {length} cannot hold a motif of length {len(motif)}")
    pos = int(rng.integers(0, slots)) * align
    return bg[:pos] + motif + bg[pos + len(motif):]


def motif_corpus(n: int, length: int = 576, seed: int = 0, split: int = 0,
                 motif: str = MOTIF, align: int = 6, P: np.ndarray = TRANSITIONS) -> list[str]:
    """``n`` grammar sequences; ``split`` selects an independent stream (0 train, 1 held-out, ...)."""
    return [motif_sequence(length, make_rng(seed, 3, split, i), motif, align, P) for i in range(n)]


def uniform_sequences(n: int, length: int, seed: int = 0) -> list[str]:
    rng = make_rng(seed, 4)
    return ["".join(BASES[j] for j in rng.integers(0, 4, size=length)) for _ in range(n)]


def contains_motif(seq: str, motif: str = MOTIF) -> bool:
    return motif in seq
