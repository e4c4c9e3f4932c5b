"""AdamW training of the tiny transformer on the masked diffusion loss."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..diffusion import T_MIN, mask_batch, masked_nll, PROB_FLOOR
from ..rng import DEFAULT_SEED, make_rng
from ..seqio import TokenSequence
from .transformer import TinyTransformerConfig, backward, forward, init_params, is_norm


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 8
    seed: int = DEFAULT_SEED
    lr: float = 8e-5
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 0.01
    clip: float = 1.0
    warmup_frac: float = 0.05
    precision: str = "float64"
    t_min: float = T_MIN

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be ≥ 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be ≥ 1")
        if self.precision not in ("float64", "float32"):
            raise ValueError(f"precision must be float64 or float32, got {self.precision!r}")


def lr_at(step: int, total: int, peak: float, warmup_frac: float = 0.05) -> float:
    """Linear warmup from 0 over the first ``warmup_frac`` of steps, then cosine decay to 0.

    ``step`` counts from 0; the last step is ``total - 1``.
    """
    warmup = max(1, round(warmup_frac * total)) if warmup_frac > 0 else 0
    if step < warmup:
        return peak * step / warmup
    decay = max(1, total - warmup)
    return peak * 0.5 * (1.0 + math.cos(math.pi * min(step - warmup, decay) / decay))


def decays(name: str, cfg: TinyTransformerConfig) -> bool:
    """Weight decay applies to projection matrices only, not to norm scales or embeddings."""
    return not (is_norm(name) or name == "embed")


@dataclass
class OptimizerState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params):
        return cls(0, {k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_grads(grads: dict, max_norm: float) -> tuple[dict, float]:
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def adamw_step(params, grads, state: OptimizerState, lr: float, tc: TrainConfig,
               cfg: TinyTransformerConfig):
    """One decoupled-weight-decay Adam update; returns new params and state."""
    t = state.step + 1
    b1, b2 = tc.beta1, tc.beta2
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g * g
        update = (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + tc.eps)
        if decays(name, cfg) and tc.weight_decay:
            update = update + tc.weight_decay * p
        new_p[name] = (p - lr * update).astype(p.dtype, copy=False)
        new_m[name], new_v[name] = m, v
    return new_p, OptimizerState(t, new_m, new_v)


def loss_and_grads(params, cfg, x0, xt, mask, t):
    """Batch-mean masked diffusion loss and its exact parameter gradients."""
    logp, cache = forward(xt, params, cfg, return_cache=True)
    per_seq = masked_nll(logp, x0, mask, t)
    B = x0.shape[0]
    picked = np.take_along_axis(logp, x0[..., None], axis=-1)[..., 0]
    live = mask & (picked > np.log(PROB_FLOOR))
    dlogp = np.zeros_like(logp)
    w = np.where(live, -1.0 / (t[:, None] * B), 0.0).astype(logp.dtype)
    np.put_along_axis(dlogp, x0[..., None], w[..., None], axis=-1)
    return float(per_seq.mean()), backward(cache, params, cfg, dlogp)


def _as_array(corpus):
    rows = [np.asarray(x.ids if isinstance(x, TokenSequence) else x, dtype=np.int64) for x in corpus]
    if not rows:
        raise ValueError("corpus is empty")
    if len({len(r) for r in rows}) != 1:
        raise ValueError("all corpus sequences must share one token length")
    return np.stack(rows)


def train(corpus: Sequence, cfg: TinyTransformerConfig, tc: TrainConfig = TrainConfig(),
          mask_id: Optional[int] = None, log: Optional[Callable[[dict], None]] = None,
          params: Optional[dict] = None):
    """Train on ``corpus`` and return ``(params, records)``.

    Each record holds ``step``, ``lr``, ``loss`` and the pre-clip ``grad_norm``.
    Every step draws its batch and masks from its own seed-derived stream, so a
    run is fully determined by ``tc.seed``.
    """
    data = _as_array(corpus)
    if data.shape[1] > cfg.max_len:
        raise ValueError(f"token length {data.shape[1]} exceeds max_len={cfg.max_len}")
    mask_id = cfg.vocab_size - 9 if mask_id is None else mask_id
    dtype = np.float64 if tc.precision == "float64" else np.float32
    if params is None:
        params = init_params(cfg, make_rng(tc.seed, 0), dtype=dtype)
    state = OptimizerState.zeros_like(params)
    records = []
    for step in range(tc.steps):
        rng = make_rng(tc.seed, 1, step)
        idx = rng.integers(0, len(data), size=tc.batch_size)
        x0, xt, mask, t = mask_batch(data[idx], rng, mask_id, tc.t_min)
        loss, grads = loss_and_grads(params, cfg, x0, xt, mask, t)
        grads, norm = clip_grads(grads, tc.clip)
        if not (np.isfinite(loss) and np.isfinite(norm)):
            raise TrainingError(f"non-finite loss or gradient at step {step} (loss={loss}, grad_norm={norm})")
        lr = lr_at(step, tc.steps, tc.lr, tc.warmup_frac)
        params, state = adamw_step(params, grads, state, lr, tc, cfg)
        rec = {"step": step, "lr": lr, "loss": loss, "grad_norm": norm}
        records.append(rec)
        if log is not None:
            log(rec)
    return params, records


def train_config_dict(tc: TrainConfig) -> dict:
    return asdict(tc)
