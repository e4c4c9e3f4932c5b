"""Generation-quality metrics: diversity, novelty, G/C ratio, Fréchet distance, MCC."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from rapidfuzz.distance import Levenshtein as _RFLevenshtein
from rapidfuzz.process import cdist

from .seqio import BASES

JITTER = 1e-6
SINGULAR_EIG = 1e-10


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance; two-row dynamic program over the shorter string."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def distance_matrix(A: Sequence[str], B: Sequence[str]) -> np.ndarray:
    """All-pairs edit distances using rapidfuzz's bit-parallel kernel."""
    return cdist(list(A), list(B), scorer=_RFLevenshtein.distance, dtype=np.int64, workers=-1)


def diversity(seqs: Sequence[str]) -> float:
    """Mean pairwise edit distance within ``seqs``."""
    n = len(seqs)
    if n < 2:
        raise ValueError("diversity needs at least 2 sequences")
    D = distance_matrix(seqs, seqs)
    return float(D[np.triu_indices(n, k=1)].sum() * 2.0 / (n * (n - 1)))


def novelty(generated: Sequence[str], train: Sequence[str]) -> float:
    """Mean over generated sequences of the edit distance to the nearest training sequence."""
    if not generated or not train:
        raise ValueError("novelty needs non-empty generated and training sets")
    return float(distance_matrix(generated, train).min(axis=1).mean())


def gc_ratio(seq: str) -> Optional[float]:
    """count(G) / count(C), or ``None`` when the sequence has no C."""
    c = seq.count("C")
    if c == 0:
        return None
    return seq.count("G") / c


def kmer_embed(seq: str, k: int = 4) -> np.ndarray:
    """Normalised overlapping k-mer count vector of length ``4**k`` (lexicographic order)."""
    if len(seq) < k:
        raise ValueError(f"sequence of length {len(seq)} is shorter than k={k}")
    codes = np.searchsorted(np.frombuffer(BASES.encode(), dtype=np.uint8),
                            np.frombuffer(seq.encode("ascii"), dtype=np.uint8))
    n = len(seq) - k + 1
    idx = np.zeros(n, dtype=np.int64)
    for j in range(k):
        idx = idx * 4 + codes[j:j + n]
    counts = np.bincount(idx, minlength=4 ** k).astype(np.float64)
    return counts / n


class KmerSpectrumEmbedder:
    """Embeds a sequence as its overlapping k-mer frequency spectrum."""

    name = "kmer_spectrum"

    def __init__(self, k: int = 4):
        self.k = k
        self.dim = 4 ** k

    def __call__(self, seq: str) -> np.ndarray:
        return kmer_embed(seq, self.k)

    def embed_many(self, seqs: Sequence[str]) -> np.ndarray:
        return np.stack([self(s) for s in seqs])

    def describe(self) -> dict:
        return {"name": self.name, "k": self.k, "dim": self.dim}


@dataclass
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray
    n: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_gaussian(vectors) -> GaussianStats:
    X = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if X.shape[0] < 2:
        raise ValueError("fit_gaussian needs at least 2 vectors")
    mu = X.mean(axis=0)
    Xc = X - mu
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    return GaussianStats(mu, (cov + cov.T) / 2.0, X.shape[0])


def _psd_sqrt(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh((S + S.T) / 2.0)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def frechet_distance(a: GaussianStats, b: GaussianStats, condition: bool = True) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).

    The trace of ``(S_a S_b)^{1/2}`` is taken from the symmetric PSD matrix
    ``sqrt(S_a) S_b sqrt(S_a)``, which has the same eigenvalues. Covariances
    whose smallest eigenvalue is below ``1e-10`` get ``1e-6 * I`` added
    (both sides, when either is near-singular) unless ``condition`` is off.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    for s in (a, b):
        if not (np.all(np.isfinite(s.mean)) and np.all(np.isfinite(s.cov))):
            raise ValueError("non-finite Gaussian statistics")
    Sa, Sb = a.cov, b.cov
    if condition and min(np.linalg.eigvalsh(Sa).min(), np.linalg.eigvalsh(Sb).min()) < SINGULAR_EIG:
        eye = JITTER * np.eye(a.dim)
        Sa, Sb = Sa + eye, Sb + eye
    root_a = _psd_sqrt(Sa)
    mid = root_a @ Sb @ root_a
    w = np.linalg.eigvalsh((mid + mid.T) / 2.0)
    tr_cross = np.sqrt(np.clip(w, 0.0, None)).sum()
    diff = a.mean - b.mean
    d = float(diff @ diff + np.trace(Sa) + np.trace(Sb) - 2.0 * tr_cross)
    return max(d, 0.0)


def mcc(tp: int, tn: int, fp: int, fn: int) -> float:
    """Matthews correlation coefficient; 0 when any marginal is empty."""
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def confusion(y_true, y_pred) -> tuple[int, int, int, int]:
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    tp = int(np.sum(y_true & y_pred))
    tn = int(np.sum(~y_true & ~y_pred))
    fp = int(np.sum(~y_true & y_pred))
    fn = int(np.sum(y_true & ~y_pred))
    return tp, tn, fp, fn


@dataclass
class MetricsReport:
    diversity: float
    novelty: float
    gc_ratio_mean: Optional[float]
    gc_undefined_count: int
    frechet: float
    n_generated: int
    n_train: int
    n_reference: int
    embedder: dict

    def to_dict(self) -> dict:
        return asdict(self)


REPORT_FIELDS = ("diversity", "novelty", "gc_ratio_mean", "gc_undefined_count", "frechet",
                 "n_generated", "n_train", "n_reference", "embedder")


def mean_gc(seqs: Sequence[str]) -> tuple[Optional[float], int]:
    vals = [gc_ratio(s) for s in seqs]
    defined = [v for v in vals if v is not None]
    return (float(np.mean(defined)) if defined else None), len(vals) - len(defined)


def sequence_frechet(generated: Sequence[str], reference: Sequence[str], embedder=None) -> float:
    embedder = embedder or KmerSpectrumEmbedder(4)
    return frechet_distance(fit_gaussian(_embed(embedder, generated)), fit_gaussian(_embed(embedder, reference)))


def _embed(embedder, seqs):
    if hasattr(embedder, "embed_many"):
        return embedder.embed_many(seqs)
    return np.stack([embedder(s) for s in seqs])


def evaluate(generated: Sequence[str], train: Sequence[str], reference: Sequence[str],
             embedder=None) -> MetricsReport:
    """Diversity of ``generated``, novelty against ``train``, mean G/C ratio and
    Fréchet distance to ``reference`` in the embedder's feature space."""
    for name, s in (("generated", generated), ("train", train), ("reference", reference)):
        if len(s) == 0:
            raise ValueError(f"{name} set is empty")
    embedder = embedder or KmerSpectrumEmbedder(4)
    gc_mean, gc_undef = mean_gc(generated)
    return MetricsReport(
        diversity=diversity(generated),
        novelty=novelty(generated, train),
        gc_ratio_mean=gc_mean,
        gc_undefined_count=gc_undef,
        frechet=sequence_frechet(generated, reference, embedder),
        n_generated=len(generated),
        n_train=len(train),
        n_reference=len(reference),
        embedder=embedder.describe() if hasattr(embedder, "describe") else {"name": type(embedder).__name__},
    )


def all_strings(alphabet: str, max_len: int, min_len: int = 0):
    for n in range(min_len, max_len + 1):
        for t in itertools.product(alphabet, repeat=n):
            yield "".join(t)
