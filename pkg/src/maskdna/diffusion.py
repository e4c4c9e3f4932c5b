"""Forward masking process and the masked-token diffusion loss.

The loss is the Monte-Carlo estimate of

    E_{t, x0, xt} [ (1/t) * sum_i 1[xt_i == MASK] * -log p(x0_i | xt) ]

with ``t`` drawn from ``Uniform(T_MIN, 1]`` so the ``1/t`` weight stays bounded.
:func:`enumerate_model_distribution` gives the exact sequence distribution a
predictor induces under one-token-per-step random-order unmasking, which the
loss upper-bounds in negative log-likelihood.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .predictor.base import MaskPredictor
from .seqio import TokenSequence, Vocabulary

T_MIN = 1e-3
PROB_FLOOR = 1e-12
MAX_ENUMERATION = 100_000


@dataclass(eq=False)
class MaskedState:
    ids: np.ndarray
    mask: np.ndarray
    t: float

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def masked_positions(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


@dataclass
class LossValue:
    value: float
    masked_count: int
    # per-sequence weighted losses, for standard errors
    per_sequence: np.ndarray

    @property
    def stderr(self) -> float:
        n = len(self.per_sequence)
        return float(self.per_sequence.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")


def _ids(x) -> np.ndarray:
    return np.asarray(x.ids if isinstance(x, TokenSequence) else x, dtype=np.int64)


def sample_time(rng: np.random.Generator, t_min: float = T_MIN) -> float:
    """Draw t from Uniform(t_min, 1]."""
    return 1.0 - rng.uniform(0.0, 1.0 - t_min)


def forward_mask(x0, t: float, rng: np.random.Generator, mask_id: int) -> MaskedState:
    """Mask each position independently with probability ``t``.

    The pattern is conditioned on masking at least one position. An empty
    first draw is replaced by an exact draw from that conditional (a count from
    the binomial truncated to >= 1, then a uniform subset), which matches
    rejection sampling without its cost at tiny ``t``.
    """
    if not 0.0 < t <= 1.0:
        raise ValueError(f"t must lie in (0, 1], got {t}")
    clean = _ids(x0)
    if np.any(clean == mask_id):
        raise ValueError("x0 already contains the mask token")
    L = clean.shape[0]
    mask = rng.random(L) < t
    if not mask.any():
        ks = np.arange(1, L + 1)
        logw = stats.binom.logpmf(ks, L, t)
        w = np.exp(logw - logw.max())
        k = int(rng.choice(ks, p=w / w.sum()))
        mask[rng.choice(L, size=k, replace=False)] = True
    ids = np.where(mask, mask_id, clean)
    return MaskedState(ids, mask, float(t))


def mask_batch(batch: Sequence, rng: np.random.Generator, mask_id: int, t_min: float = T_MIN):
    """Draw one (t, mask pattern) per sequence; returns ``(x0, xt, mask, t)`` arrays."""
    x0 = np.stack([_ids(x) for x in batch])
    states = []
    for row in x0:
        states.append(forward_mask(row, sample_time(rng, t_min), rng, mask_id))
    xt = np.stack([s.ids for s in states])
    mask = np.stack([s.mask for s in states])
    t = np.array([s.t for s in states])
    return x0, xt, mask, t


def masked_nll(logp: np.ndarray, x0: np.ndarray, mask: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Per-sequence ``(1/t) * sum over masked positions of -log p(x0_i)``."""
    picked = np.take_along_axis(logp, x0[..., None], axis=-1)[..., 0]
    picked = np.maximum(picked, np.log(PROB_FLOOR))
    return -(np.where(mask, picked, 0.0).sum(axis=1)) / t


def diffusion_loss(pred: MaskPredictor, batch: Sequence, rng: np.random.Generator,
                   mask_id: int, t_min: float = T_MIN) -> LossValue:
    """Monte-Carlo masked diffusion loss, averaged over the batch."""
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    lengths = {len(_ids(x)) for x in batch}
    if len(lengths) != 1:
        raise ValueError(f"all sequences in a batch must share one token length, got {sorted(lengths)}")
    x0, xt, mask, t = mask_batch(batch, rng, mask_id, t_min)
    logp = np.asarray(pred.log_probs_batch(xt))
    if logp.shape[:2] != x0.shape:
        raise ValueError(f"predictor returned shape {logp.shape[:2]}, expected {x0.shape}")
    per_seq = masked_nll(logp, x0, mask, t)
    return LossValue(float(per_seq.mean()), int(mask.sum()), per_seq)


def _kmer_rows(logp: np.ndarray, n_kmers: int) -> np.ndarray:
    """Probabilities restricted to k-mer ids and renormalised."""
    p = np.exp(logp[..., :n_kmers])
    return p / p.sum(axis=-1, keepdims=True)


def enumerate_model_distribution(pred: MaskPredictor, L: int, vocab: Vocabulary) -> dict[tuple, float]:
    """Exact p(x0) under random-order, one-token-per-step unmasking.

    Averaging over all ``L!`` reveal orders equals, at every step, picking the
    next position uniformly among the still-masked ones; a dynamic program over
    revealed subsets accumulates that process for every candidate sequence.
    Predictor rows are restricted to k-mer ids and renormalised, exactly as
    the sampler does before drawing tokens.
    """
    V = vocab.n_kmers
    if V ** L > MAX_ENUMERATION:
        raise ValueError(f"V^L = {V}^{L} exceeds the enumeration limit {MAX_ENUMERATION}")
    cache: dict[tuple, np.ndarray] = {}

    def rows(state: tuple) -> np.ndarray:
        if state not in cache:
            cache[state] = _kmer_rows(pred.log_probs(np.array(state)), V)
        return cache[state]

    table = {}
    full = (1 << L) - 1
    for x in itertools.product(range(V), repeat=L):
        reach = {0: 1.0}
        for size in range(L):
            nxt: dict[int, float] = {}
            for subset, w in reach.items():
                state = tuple(x[i] if subset >> i & 1 else vocab.mask_id for i in range(L))
                r = rows(state)
                share = w / (L - size)
                for i in range(L):
                    if not subset >> i & 1:
                        s2 = subset | (1 << i)
                        nxt[s2] = nxt.get(s2, 0.0) + share * r[i, x[i]]
            reach = nxt
        table[x] = reach[full]
    return table


def exact_nll(pred: MaskPredictor, corpus: Sequence, vocab: Vocabulary) -> float:
    """Mean ``-log p(x0)`` of ``corpus`` under the enumerated model distribution."""
    seqs = [tuple(_ids(x).tolist()) for x in corpus]
    L = len(seqs[0])
    table = enumerate_model_distribution(pred, L, vocab)
    return float(-np.mean([np.log(table[s]) for s in seqs]))
