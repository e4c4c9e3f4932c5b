"""A small bidirectional transformer mask predictor with hand-written backprop.

Pre-norm blocks: RMSNorm -> multi-head self-attention with rotary position
embeddings (no causal mask) -> residual, RMSNorm -> SwiGLU feed-forward ->
residual. A final RMSNorm feeds an output projection to vocabulary logits.

``forward`` returns log-probabilities and an activation cache; ``backward``
consumes that cache plus an upstream gradient with respect to the
log-probabilities and returns exact parameter gradients.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.stats import truncnorm

from .base import MaskPredictor

NORM_EPS = 1e-6
INIT_STD = 0.02


@dataclass(frozen=True)
class TinyTransformerConfig:
    layers: int = 2
    heads: int = 4
    model_dim: int = 64
    ff_dim: int = 171
    vocab_size: int = 4105
    max_len: int = 256
    rope_base: float = 10000.0
    tie_embeddings: bool = False

    def __post_init__(self):
        if self.model_dim % self.heads:
            raise ValueError(f"model_dim={self.model_dim} is not divisible by heads={self.heads}")
        if (self.model_dim // self.heads) % 2:
            raise ValueError("head dimension must be even for rotary embeddings")
        if min(self.layers, self.heads, self.ff_dim, self.vocab_size, self.max_len) < 1:
            raise ValueError("all size fields must be positive")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads

    def to_dict(self) -> dict:
        return asdict(self)


def param_shapes(cfg: TinyTransformerConfig) -> dict[str, tuple]:
    """Parameter names and shapes in declaration (and serialisation) order."""
    d, f, V = cfg.model_dim, cfg.ff_dim, cfg.vocab_size
    shapes = {"embed": (V, d)}
    for l in range(cfg.layers):
        shapes[f"l{l}.attn_norm"] = (d,)
        for name in ("wq", "wk", "wv", "wo"):
            shapes[f"l{l}.{name}"] = (d, d)
        shapes[f"l{l}.ffn_norm"] = (d,)
        shapes[f"l{l}.w_gate"] = (d, f)
        shapes[f"l{l}.w_up"] = (d, f)
        shapes[f"l{l}.w_down"] = (f, d)
    shapes["final_norm"] = (d,)
    if not cfg.tie_embeddings:
        shapes["out"] = (d, V)
    return shapes


def is_norm(name: str) -> bool:
    return name.endswith("norm")


def init_params(cfg: TinyTransformerConfig, rng: np.random.Generator, dtype=np.float64) -> dict[str, np.ndarray]:
    """Truncated-normal (std 0.02, cut at 2 std) weights; norm scales start at one."""
    params = {}
    for name, shape in param_shapes(cfg).items():
        if is_norm(name):
            params[name] = np.ones(shape, dtype=dtype)
        else:
            w = truncnorm.rvs(-2.0, 2.0, scale=INIT_STD, size=shape, random_state=rng)
            params[name] = w.astype(dtype)
    return params


def _rope_tables(L: int, head_dim: int, base: float, dtype):
    half = head_dim // 2
    inv_freq = base ** (-np.arange(half, dtype=np.float64) * 2.0 / head_dim)
    ang = np.arange(L, dtype=np.float64)[:, None] * inv_freq[None, :]
    return np.cos(ang).astype(dtype), np.sin(ang).astype(dtype)


def _rope(x, cos, sin):
    half = x.shape[-1] // 2
    x1, x2 = x[..., :half], x[..., half:]
    return np.concatenate([x1 * cos - x2 * sin, x1 * sin + x2 * cos], axis=-1)


def _rope_back(dy, cos, sin):
    half = dy.shape[-1] // 2
    d1, d2 = dy[..., :half], dy[..., half:]
    return np.concatenate([d1 * cos + d2 * sin, -d1 * sin + d2 * cos], axis=-1)


def _rms_norm(x, g):
    r = np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + NORM_EPS)
    xhat = x / r
    return xhat * g, (xhat, r)


def _rms_norm_back(dy, g, cache):
    xhat, r = cache
    dg = np.sum(dy * xhat, axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    dx = (dxhat - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)) / r
    return dx, dg


def _softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _split_heads(x, H):
    B, L, d = x.shape
    return x.reshape(B, L, H, d // H).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, H, L, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, L, H * dh)


def _as_batch(ids, cfg):
    ids = np.asarray(ids, dtype=np.int64)
    single = ids.ndim == 1
    if single:
        ids = ids[None, :]
    if ids.ndim != 2:
        raise ValueError(f"expected ids of shape (L,) or (B, L), got {ids.shape}")
    if ids.shape[1] > cfg.max_len:
        raise ValueError(f"sequence length {ids.shape[1]} exceeds max_len={cfg.max_len}")
    if ids.shape[1] == 0:
        raise ValueError("empty sequence")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise ValueError("token id out of vocabulary range")
    return ids, single


def _check_params(params, cfg):
    for name, shape in param_shapes(cfg).items():
        if name not in params:
            raise ValueError(f"missing parameter {name!r}")
        if params[name].shape != shape:
            raise ValueError(f"parameter {name!r} has shape {params[name].shape}, expected {shape}")


def _trunk(params, cfg, ids, rope=True, keep_cache=True):
    """Embedding through final norm; returns hidden states (B, L, d) and cache."""
    B, L = ids.shape
    H, dh = cfg.heads, cfg.head_dim
    dtype = params["embed"].dtype
    if rope:
        cos, sin = _rope_tables(L, dh, cfg.rope_base, dtype)
    else:
        cos, sin = np.ones((L, dh // 2), dtype), np.zeros((L, dh // 2), dtype)
    scale = 1.0 / np.sqrt(dh)

    x = params["embed"][ids]
    layer_caches = []
    for l in range(cfg.layers):
        p = lambda n: params[f"l{l}.{n}"]  # noqa: E731
        xn, n1 = _rms_norm(x, p("attn_norm"))
        q = _rope(_split_heads(xn @ p("wq"), H), cos, sin)
        k = _rope(_split_heads(xn @ p("wk"), H), cos, sin)
        v = _split_heads(xn @ p("wv"), H)
        att = _softmax((q @ k.transpose(0, 1, 3, 2)) * scale)
        ctx = _merge_heads(att @ v)
        h = x + ctx @ p("wo")

        hn, n2 = _rms_norm(h, p("ffn_norm"))
        a = hn @ p("w_gate")
        b = hn @ p("w_up")
        sig = _sigmoid(a)
        s = a * sig
        u = s * b
        x = h + u @ p("w_down")
        if keep_cache:
            layer_caches.append(dict(xn=xn, n1=n1, q=q, k=k, v=v, att=att, ctx=ctx,
                                     hn=hn, n2=n2, a=a, b=b, sig=sig, s=s, u=u))
    hf, nf = _rms_norm(x, params["final_norm"])
    cache = dict(ids=ids, cos=cos, sin=sin, layers=layer_caches, hf=hf, nf=nf) if keep_cache else None
    return hf, cache


def _out_matrix(params, cfg):
    return params["embed"].T if cfg.tie_embeddings else params["out"]


def forward(ids, params, cfg: TinyTransformerConfig, rope: bool = True, return_cache: bool = False):
    """Log-probabilities ``(L, V)`` for one state or ``(B, L, V)`` for a batch.

    With ``return_cache`` the activation cache needed by :func:`backward` is
    returned alongside. ``rope=False`` disables rotary embeddings (the model
    then has no positional information), which is only useful for tests.
    """
    ids, single = _as_batch(ids, cfg)
    _check_params(params, cfg)
    hf, cache = _trunk(params, cfg, ids, rope=rope, keep_cache=return_cache)
    z = hf @ _out_matrix(params, cfg)
    z = z - z.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    if return_cache:
        cache["logp"] = logp
        cache["single"] = single
    out = logp[0] if single else logp
    return (out, cache) if return_cache else out


def backward(cache, params, cfg: TinyTransformerConfig, dlogp) -> dict[str, np.ndarray]:
    """Gradients of ``sum(dlogp * logp)`` with respect to every parameter."""
    if not cache or "logp" not in cache:
        raise ValueError("backward needs the activation cache from forward(..., return_cache=True)")
    logp = cache["logp"]
    dlogp = np.asarray(dlogp, dtype=logp.dtype)
    if cache["single"] and dlogp.ndim == 2:
        dlogp = dlogp[None]
    if dlogp.shape != logp.shape:
        raise ValueError(f"upstream gradient shape {dlogp.shape} does not match output {logp.shape}")

    H = cfg.heads
    scale = 1.0 / np.sqrt(cfg.head_dim)
    cos, sin = cache["cos"], cache["sin"]
    grads = {name: np.zeros_like(params[name]) for name in param_shapes(cfg)}

    # log-softmax
    dz = dlogp - np.exp(logp) * dlogp.sum(axis=-1, keepdims=True)
    hf = cache["hf"]
    flat_h = hf.reshape(-1, hf.shape[-1])
    flat_dz = dz.reshape(-1, dz.shape[-1])
    W = _out_matrix(params, cfg)
    if cfg.tie_embeddings:
        grads["embed"] += flat_dz.T @ flat_h
    else:
        grads["out"] = flat_h.T @ flat_dz
    dhf = dz @ W.T
    dx, grads["final_norm"] = _rms_norm_back(dhf, params["final_norm"], cache["nf"])

    for l in reversed(range(cfg.layers)):
        c = cache["layers"][l]
        p = lambda n: params[f"l{l}.{n}"]  # noqa: E731
        g = lambda n: f"l{l}.{n}"  # noqa: E731
        d = dx.shape[-1]

        # feed-forward branch
        du = dx @ p("w_down").T
        grads[g("w_down")] = c["u"].reshape(-1, c["u"].shape[-1]).T @ dx.reshape(-1, d)
        ds = du * c["b"]
        db = du * c["s"]
        sig = c["sig"]
        da = ds * (sig + c["a"] * sig * (1.0 - sig))
        hn2 = c["hn"].reshape(-1, d)
        grads[g("w_gate")] = hn2.T @ da.reshape(-1, da.shape[-1])
        grads[g("w_up")] = hn2.T @ db.reshape(-1, db.shape[-1])
        dhn = da @ p("w_gate").T + db @ p("w_up").T
        dh_norm, grads[g("ffn_norm")] = _rms_norm_back(dhn, p("ffn_norm"), c["n2"])
        dh = dx + dh_norm

        # attention branch
        grads[g("wo")] = c["ctx"].reshape(-1, d).T @ dh.reshape(-1, d)
        dctx = _split_heads(dh @ p("wo").T, H)
        att, q, k, v = c["att"], c["q"], c["k"], c["v"]
        dv = att.transpose(0, 1, 3, 2) @ dctx
        datt = dctx @ v.transpose(0, 1, 3, 2)
        dscore = att * (datt - np.sum(datt * att, axis=-1, keepdims=True)) * scale
        dq = _rope_back(dscore @ k, cos, sin)
        dk = _rope_back(dscore.transpose(0, 1, 3, 2) @ q, cos, sin)
        dq, dk, dv = _merge_heads(dq), _merge_heads(dk), _merge_heads(dv)
        xn = c["xn"].reshape(-1, d)
        grads[g("wq")] = xn.T @ dq.reshape(-1, d)
        grads[g("wk")] = xn.T @ dk.reshape(-1, d)
        grads[g("wv")] = xn.T @ dv.reshape(-1, d)
        dxn = dq @ p("wq").T + dk @ p("wk").T + dv @ p("wv").T
        dx_norm, grads[g("attn_norm")] = _rms_norm_back(dxn, p("attn_norm"), c["n1"])
        dx = dh + dx_norm

    np.add.at(grads["embed"], cache["ids"].reshape(-1), dx.reshape(-1, dx.shape[-1]))
    return grads


def extract_embeddings(ids, params, cfg: TinyTransformerConfig) -> np.ndarray:
    """Final-layer (post-norm) hidden states of a clean sequence, shape ``(L, d)``."""
    ids, single = _as_batch(ids, cfg)
    _check_params(params, cfg)
    hf, _ = _trunk(params, cfg, ids, keep_cache=False)
    return hf[0] if single else hf


def mean_pool(hidden: np.ndarray) -> np.ndarray:
    """Average token representations over the sequence axis."""
    return np.asarray(hidden).mean(axis=-2)


class TinyTransformer(MaskPredictor):
    """Wraps parameters and config as a :class:`MaskPredictor`."""

    def __init__(self, params: dict[str, np.ndarray], cfg: TinyTransformerConfig, batch_chunk: int = 256):
        _check_params(params, cfg)
        self.params = params
        self.cfg = cfg
        self.vocab_size = cfg.vocab_size
        self.batch_chunk = batch_chunk

    def log_probs_batch(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        parts = [forward(ids[i:i + self.batch_chunk], self.params, self.cfg)
                 for i in range(0, len(ids), self.batch_chunk)]
        return np.concatenate(parts, axis=0)

    def embed(self, ids) -> np.ndarray:
        return mean_pool(extract_embeddings(ids, self.params, self.cfg))


def config_field_names() -> list[str]:
    return [f.name for f in fields(TinyTransformerConfig)]
