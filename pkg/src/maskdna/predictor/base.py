"""The mask-predictor contract shared by the sampler and the training loss."""

from __future__ import annotations

import numpy as np


class MaskPredictor:
    """Maps a (partially) masked id sequence to per-position log-probabilities.

    Subclasses implement :meth:`log_probs_batch`; rows of the returned
    ``(B, L, V)`` array must exponentiate to proper distributions, and the
    output must be a deterministic function of the input ids.
    """

    vocab_size: int

    def log_probs_batch(self, ids: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_probs(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        return self.log_probs_batch(ids[None, :])[0]

    def __call__(self, state) -> np.ndarray:
        ids = getattr(state, "ids", state)
        return self.log_probs(ids)


class UniformPredictor(MaskPredictor):
    """Uniform over the first ``n_support`` ids, zero mass elsewhere."""

    def __init__(self, vocab_size: int, n_support: int | None = None):
        self.vocab_size = vocab_size
        self.n_support = vocab_size if n_support is None else n_support

    def log_probs_batch(self, ids):
        ids = np.asarray(ids)
        out = np.full(ids.shape + (self.vocab_size,), -np.inf)
        out[..., : self.n_support] = -np.log(self.n_support)
        return out
