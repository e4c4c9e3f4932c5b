"""Seeded random streams.

Every source of randomness in the package is a :class:`numpy.random.Generator`
driven by the counter-based Philox bit generator. Streams are derived from a
root seed plus a tuple of integer keys, so independent sub-streams (one per
training step, per generated sequence, ...) never depend on call order.
"""

from __future__ import annotations

import numpy as np

DEFAULT_SEED = 20240601


def make_rng(seed: int = DEFAULT_SEED, *keys: int) -> np.random.Generator:
    """Return a Philox generator for ``seed`` and the sub-stream ``keys``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def split(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split ``rng`` into ``n`` independent child generators."""
    return [np.random.Generator(bg) for bg in rng.bit_generator.spawn(n)]
