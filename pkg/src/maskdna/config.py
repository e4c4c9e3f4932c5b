"""Flat ``key=value`` run configuration shared by the command-line tools."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Union

from . import __version__
from .predictor.training import TrainConfig
from .predictor.transformer import TinyTransformerConfig
from .rng import DEFAULT_SEED
from .sampler import SamplerConfig, canonical_strategy
from .seqio import build_vocab


PATH_FIELDS = ("corpus", "checkpoint", "out")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # tokenizer
    k: int = 6
    # model
    layers: int = 2
    heads: int = 4
    model_dim: int = 64
    ff_dim: int = 171
    max_len: int = 256
    rope_base: float = 10000.0
    tie_embeddings: bool = False
    # training
    steps: int = 2000
    batch_size: int = 8
    seed: int = DEFAULT_SEED
    lr: float = 8e-5
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.01
    clip: float = 1.0
    warmup_frac: float = 0.05
    precision: str = "float64"
    # sampling
    strategy: str = "random"
    temperature: float = 1.1
    sample_steps: int = 50
    schedule: str = "linear"
    # inputs and outputs
    corpus: str = ""
    checkpoint: str = ""
    out: str = ""
    skip_n_records: bool = False

    def model_config(self) -> TinyTransformerConfig:
        return TinyTransformerConfig(self.layers, self.heads, self.model_dim, self.ff_dim,
                                     build_vocab(self.k).size, self.max_len, self.rope_base, self.tie_embeddings)

    def train_config(self) -> TrainConfig:
        return TrainConfig(steps=self.steps, batch_size=self.batch_size, seed=self.seed, lr=self.lr,
                           beta1=self.beta1, beta2=self.beta2, weight_decay=self.weight_decay, clip=self.clip,
                           warmup_frac=self.warmup_frac, precision=self.precision)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(self.strategy, self.temperature, self.sample_steps, self.schedule, self.seed)

    def validate(self) -> "RunConfig":
        try:
            build_vocab(self.k)
            self.model_config()
            self.train_config()
            canonical_strategy(self.strategy)
            self.sampler_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Short hash of every setting except file paths."""
        settings = {k: v for k, v in self.to_dict().items() if k not in PATH_FIELDS}
        blob = json.dumps(settings, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def provenance(self) -> dict:
        return {"tool": "maskdna", "version": __version__, "config_hash": self.digest(), "seed": self.seed}

    def provenance_line(self) -> str:
        p = self.provenance()
        return f"{p['tool']} {p['version']} config_hash={p['config_hash']} seed={p['seed']}"


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    if kind in ("bool", bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return raw.strip()


def parse_config(text: str) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment. Unknown keys are rejected."""
    out = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def load_config(path: Union[str, os.PathLike, None] = None, **overrides) -> RunConfig:
    """Defaults, then the file at ``path``, then non-``None`` ``overrides`` (flags win)."""
    values = {}
    if path:
        with open(path) as fh:
            values.update(parse_config(fh.read()))
    for key, val in overrides.items():
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r}")
        if val is not None:
            values[key] = val
    return replace(RunConfig(), **values).validate()


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{k}={str(v).lower() if isinstance(v, bool) else v}\n" for k, v in cfg.to_dict().items())
