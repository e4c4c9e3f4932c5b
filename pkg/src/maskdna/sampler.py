"""Iterative unmasking generation.

Starting from an all-mask sequence, every step queries the predictor, draws a
candidate token for each masked position from the temperature-scaled row,
scores the candidates with a strategy-specific confidence, and commits the
``n`` best. Positions not selected stay masked; committed positions never
change again. The ``p2`` strategy instead ranks *all* positions each step and
keeps the top ``k_t`` unmasked, so committed tokens can be re-masked.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .diffusion import MaskedState
from .predictor.base import MaskPredictor
from .rng import DEFAULT_SEED, make_rng
from .seqio import TokenSequence, Vocabulary

STRATEGIES = ("random", "maskgit", "entropy", "topkm", "p2")
SCHEDULES = ("linear", "cosine")
STRATEGY_ALIASES = {"topk_margin": "topkm", "topk-m": "topkm", "topkmargin": "topkm", "mask_git": "maskgit"}


def canonical_strategy(name: str) -> str:
    key = name.strip().lower()
    key = STRATEGY_ALIASES.get(key, key)
    if key not in STRATEGIES:
        raise ValueError(f"unknown strategy {name!r}; valid strategies: {', '.join(STRATEGIES)}")
    return key


@dataclass(frozen=True)
class UnmaskSchedule:
    T: int
    kind: str
    counts: tuple

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.counts)


@dataclass(frozen=True)
class SamplerConfig:
    strategy: str = "random"
    temperature: float = 1.1
    steps: int = 50
    schedule: str = "linear"
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        object.__setattr__(self, "strategy", canonical_strategy(self.strategy))
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if self.steps < 1:
            raise ValueError("steps must be ≥ 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")


@dataclass
class StepRecord:
    step: int
    masked_before: list
    unmasked: list
    tokens: list
    confidences: list
    remasked: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"step": self.step, "unmasked": self.unmasked, "tokens": self.tokens,
                           "confidences": self.confidences, "remasked": self.remasked,
                           "masked_before": self.masked_before})


def make_schedule(T: int, L: int, kind: str = "linear") -> UnmaskSchedule:
    """Per-step reveal counts summing to ``L``.

    ``linear`` splits ``L`` as evenly as possible with the remainder going to
    the earliest steps. ``cosine`` rounds (half up) the cumulative target
    ``L * (1 - cos(pi * s / T)) / 2`` and forces the last step to close at ``L``.
    """
    if T < 1 or L < 1:
        raise ValueError("T and L must be ≥ 1")
    if kind == "linear":
        base, rem = divmod(L, T)
        counts = [base + (1 if s < rem else 0) for s in range(T)]
    elif kind == "cosine":
        cum = [math.floor(L * (1.0 - math.cos(math.pi * s / T)) / 2.0 + 0.5) for s in range(T + 1)]
        cum[-1] = L
        cum = np.maximum.accumulate(np.minimum(cum, L))
        counts = [int(c) for c in np.diff(cum)]
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    return UnmaskSchedule(T, kind, tuple(int(c) for c in counts))


def apply_temperature(logits: np.ndarray, tau: float) -> np.ndarray:
    """``softmax(logits / tau)`` along the last axis (equivalently p**(1/tau) renormalised)."""
    if not tau > 0:
        raise ValueError("temperature must be > 0")
    z = np.asarray(logits, dtype=np.float64) / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def token_probs(logp: np.ndarray, tau: float, n_kmers: int) -> np.ndarray:
    """Temperature-scaled distribution restricted to k-mer ids (specials get no mass)."""
    return apply_temperature(np.asarray(logp)[..., :n_kmers], tau)


def draw_tokens(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row by inverse CDF."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    tok = (cdf < u[:, None]).sum(axis=-1)
    return np.minimum(tok, probs.shape[-1] - 1)


def entropy(probs: np.ndarray) -> np.ndarray:
    p = np.asarray(probs)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


def confidence(strategy: str, probs: np.ndarray, tokens: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Confidence score per row; higher means unmask sooner."""
    if strategy == "maskgit":
        return probs[np.arange(len(tokens)), tokens]
    if strategy == "entropy":
        return -entropy(probs)
    if strategy == "topkm":
        if probs.shape[-1] < 2:
            return np.ones(len(probs))
        top2 = -np.partition(-probs, 1, axis=-1)[:, :2]
        return top2[:, 0] - top2[:, 1]
    if strategy == "random":
        return rng.random(len(tokens))
    if strategy == "p2":
        return probs.max(axis=-1)
    raise ValueError(f"unknown strategy {strategy!r}")


def top_n(positions: np.ndarray, conf: np.ndarray, n: int) -> np.ndarray:
    """The ``n`` highest-confidence positions; ties go to the lowest index."""
    order = np.lexsort((positions, -conf))
    return np.sort(positions[order[:n]])


def select_positions(strategy: str, probs: np.ndarray, tokens: np.ndarray, masked: Sequence[int],
                     n: int, rng: np.random.Generator):
    """Choose ``n`` of the masked positions to reveal.

    ``probs`` and ``tokens`` are full-length (one row per sequence position);
    only rows in ``masked`` are scored. Returns ``(chosen, conf)`` where
    ``conf`` is aligned with ``masked``.
    """
    strategy = canonical_strategy(strategy)
    masked = np.asarray(masked, dtype=np.int64)
    if n > len(masked):
        raise ValueError(f"cannot unmask {n} positions when only {len(masked)} are masked")
    if n < 0:
        raise ValueError("n must be non-negative")
    conf = confidence(strategy, probs[masked], tokens[masked], rng)
    return top_n(masked, conf, n), conf


def _state_from_ids(ids, mask_id, t=1.0):
    ids = np.asarray(ids, dtype=np.int64)
    return MaskedState(ids, ids == mask_id, t)


def _step_from_logp(ids, logp, cfg: SamplerConfig, n: int, rng, n_kmers: int, mask_id: int, step: int):
    masked = np.flatnonzero(ids == mask_id)
    if n > len(masked):
        raise ValueError(f"step {step}: schedule asks for {n} reveals but only {len(masked)} positions are masked")
    if n == 0:
        return ids.copy(), StepRecord(step, masked.tolist(), [], [], [])
    probs = np.zeros((len(ids), n_kmers))
    tokens = np.zeros(len(ids), dtype=np.int64)
    probs[masked] = token_probs(logp[masked], cfg.temperature, n_kmers)
    tokens[masked] = draw_tokens(probs[masked], rng)
    chosen, conf = select_positions(cfg.strategy, probs, tokens, masked, n, rng)
    out = ids.copy()
    out[chosen] = tokens[chosen]
    conf_of = dict(zip(masked.tolist(), conf.tolist()))
    return out, StepRecord(step, masked.tolist(), chosen.tolist(), tokens[chosen].tolist(),
                           [conf_of[i] for i in chosen.tolist()])


def _p2_from_logp(ids, logp, cfg: SamplerConfig, keep: int, rng, n_kmers: int, mask_id: int, step: int):
    L = len(ids)
    masked = np.flatnonzero(ids == mask_id)
    probs = token_probs(logp, cfg.temperature, n_kmers)
    tokens = ids.copy()
    if len(masked):
        tokens[masked] = draw_tokens(probs[masked], rng)
    conf = probs.max(axis=-1)
    kept = top_n(np.arange(L), conf, keep)
    out = np.full(L, mask_id, dtype=np.int64)
    out[kept] = tokens[kept]
    was_unmasked = ids != mask_id
    fresh = [int(i) for i in kept if not was_unmasked[i]]
    remasked = [int(i) for i in np.flatnonzero(was_unmasked & (out == mask_id))]
    return out, StepRecord(step, masked.tolist(), fresh, [int(out[i]) for i in fresh],
                           [float(conf[i]) for i in fresh], remasked)


def sample_step(state: MaskedState, pred: MaskPredictor, cfg: SamplerConfig, n: int,
                rng: np.random.Generator, vocab: Vocabulary, step: int = 0):
    """Reveal ``n`` masked positions; returns ``(next_state, record)``."""
    logp = pred.log_probs(state.ids)
    ids, rec = _step_from_logp(np.asarray(state.ids), logp, cfg, n, rng, vocab.n_kmers, vocab.mask_id, step)
    return _state_from_ids(ids, vocab.mask_id, state.t), rec


def p2_step(state: MaskedState, pred: MaskPredictor, cfg: SamplerConfig, keep: int,
            rng: np.random.Generator, vocab: Vocabulary, step: int = 0):
    """Keep the ``keep`` most confident positions (over all of them) unmasked, re-mask the rest."""
    logp = pred.log_probs(state.ids)
    ids, rec = _p2_from_logp(np.asarray(state.ids), logp, cfg, keep, rng, vocab.n_kmers, vocab.mask_id, step)
    return _state_from_ids(ids, vocab.mask_id, state.t), rec


def _run(pred, L, cfg, vocab, rngs, record):
    B = len(rngs)
    sched = make_schedule(cfg.steps, L, cfg.schedule)
    keep = sched.cumulative
    ids = np.full((B, L), vocab.mask_id, dtype=np.int64)
    trajectories = [[] for _ in range(B)]
    for s, n in enumerate(sched.counts):
        if cfg.strategy != "p2" and n == 0:
            for b in range(B):
                if record:
                    trajectories[b].append(StepRecord(s, np.flatnonzero(ids[b] == vocab.mask_id).tolist(), [], [], []))
            continue
        logp = pred.log_probs_batch(ids)
        for b in range(B):
            if cfg.strategy == "p2":
                ids[b], rec = _p2_from_logp(ids[b], logp[b], cfg, int(keep[s]), rngs[b],
                                            vocab.n_kmers, vocab.mask_id, s)
            else:
                ids[b], rec = _step_from_logp(ids[b], logp[b], cfg, int(n), rngs[b],
                                              vocab.n_kmers, vocab.mask_id, s)
            if record:
                trajectories[b].append(rec)
    assert not np.any(ids == vocab.mask_id)
    return ids, trajectories


def generate(pred: MaskPredictor, L: int, cfg: SamplerConfig, vocab: Vocabulary,
             rng: Optional[np.random.Generator] = None, trajectory: bool = False):
    """Generate one clean sequence of ``L`` tokens.

    Returns a :class:`TokenSequence`, or ``(TokenSequence, [StepRecord, ...])``
    when ``trajectory`` is set.
    """
    if L < 1:
        raise ValueError("L must be ≥ 1")
    rng = make_rng(cfg.seed) if rng is None else rng
    ids, traj = _run(pred, L, cfg, vocab, [rng], trajectory)
    seq = TokenSequence(ids[0], vocab.k)
    return (seq, traj[0]) if trajectory else seq


def generate_batch(pred: MaskPredictor, L: int, n: int, cfg: SamplerConfig, vocab: Vocabulary,
                   trajectory: bool = False, chunk: int = 256):
    """Generate ``n`` sequences; sequence ``i`` draws from its own stream ``(cfg.seed, i)``.

    Predictor calls are batched across sequences in chunks of ``chunk``.
    """
    seqs, trajs = [], []
    for start in range(0, n, chunk):
        rngs = [make_rng(cfg.seed, 2, i) for i in range(start, min(n, start + chunk))]
        ids, traj = _run(pred, L, cfg, vocab, rngs, trajectory)
        seqs.extend(TokenSequence(row, vocab.k) for row in ids)
        trajs.extend(traj)
    return (seqs, trajs) if trajectory else seqs
