"""``maskdna`` command line: vocabularies, corpora, training, sampling, evaluation, ablation, gradient checks.

Exit codes: 0 success, 1 computation failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, dump_config, load_config
from .corpus import motif_corpus
from .metrics import REPORT_FIELDS, KmerSpectrumEmbedder, evaluate
from .predictor import checkpoint
from .predictor.gradcheck import gradcheck
from .predictor.training import TrainingError, train
from .predictor.transformer import TinyTransformer, TinyTransformerConfig, param_shapes
from .sampler import STRATEGIES, SamplerConfig, generate_batch
from .seqio import SUPPORTED_K, FastaError, TokenizeError, detokenize, format_fasta, read_fasta, tokenize, \
    vocab_from_size

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _comment(cfg: RunConfig, **extra) -> str:
    parts = [cfg.provenance_line()] + [f"{k}={v}" for k, v in extra.items()]
    return " ".join(parts)


def _read_records(path: str, skip_n: bool = False, what: str = "input"):
    try:
        recs = read_fasta(path, skip_n_records=skip_n)
    except FileNotFoundError:
        raise UsageError(f"{what}: no such file {path}") from None
    except FastaError as exc:
        raise UsageError(f"{what}: {exc}") from None
    if not recs:
        raise UsageError(f"{what}: {path} contains no sequences")
    return recs


def _write_text(path: Optional[str], text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _load_model(path: str):
    try:
        params, mcfg = checkpoint.load(path)
    except FileNotFoundError:
        raise UsageError(f"no such checkpoint {path}") from None
    except (checkpoint.CheckpointError, ValueError) as exc:
        raise UsageError(f"cannot load checkpoint {path}: {exc}") from None
    return TinyTransformer(params, mcfg), mcfg, vocab_from_size(mcfg.vocab_size)


def _token_length(args, k: int) -> int:
    if args.tokens is not None:
        if args.tokens < 1:
            raise UsageError("--tokens must be >= 1")
        return args.tokens
    if args.len < k or args.len % k:
        raise UsageError(f"--len {args.len} is not a positive multiple of k={k}")
    return args.len // k


def _run_config(args, **flags) -> RunConfig:
    try:
        return load_config(getattr(args, "config", None), **flags)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    except FileNotFoundError as exc:
        raise UsageError(f"config: {exc}") from None


# --- subcommands ----------------------------------------------------------

def cmd_build_vocab(args) -> int:
    if args.k not in SUPPORTED_K:
        raise UsageError(f"unsupported k={args.k}; choose from {', '.join(map(str, SUPPORTED_K))}")
    cfg = _run_config(args, k=args.k)
    from .seqio import build_vocab
    out = args.out or f"vocab_k{args.k}.txt"
    build_vocab(args.k).save(out, note=cfg.provenance_line())
    print(f"wrote {out}", file=sys.stderr)
    return EXIT_OK


def cmd_make_corpus(args) -> int:
    if args.n < 1 or args.length < 1:
        raise UsageError("--n and --length must be >= 1")
    cfg = _run_config(args, seed=args.seed)
    try:
        seqs = motif_corpus(args.n, args.length, seed=cfg.seed, split=args.split)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    recs = [(f"motif_{args.split}_{i}", s) for i, s in enumerate(seqs)]
    _write_text(args.out, format_fasta(recs, comments=[_comment(cfg, split=args.split, length=args.length)]))
    return EXIT_OK


def cmd_train(args) -> int:
    if args.steps is not None and args.steps < 1:
        raise UsageError("steps must be ≥ 1")
    cfg = _run_config(args, corpus=args.corpus, out=args.out, seed=args.seed, steps=args.steps,
                      batch_size=args.batch_size, lr=args.lr, k=args.k)
    if not cfg.corpus:
        raise UsageError("no corpus given (--corpus or corpus= in the config)")
    if not cfg.out:
        raise UsageError("no output checkpoint given (--out or out= in the config)")
    mcfg = cfg.model_config()
    vocab = vocab_from_size(mcfg.vocab_size)
    recs = _read_records(cfg.corpus, cfg.skip_n_records, "corpus")
    try:
        toks = [tokenize(s, vocab) for _, s in recs]
    except TokenizeError as exc:
        raise UsageError(f"corpus: {exc}") from None
    lengths = {len(t) for t in toks}
    if len(lengths) != 1:
        raise UsageError(f"corpus sequences must share one token length, got {sorted(lengths)}")
    if lengths.pop() > mcfg.max_len:
        raise UsageError(f"sequences exceed max_len={mcfg.max_len} tokens")
    log_path = args.log or cfg.out + ".log.jsonl"
    with open(log_path, "w") as log:
        log.write(json.dumps({"provenance": cfg.provenance(), "config": cfg.to_dict()}) + "\n")

        def emit(rec):
            log.write(json.dumps(rec) + "\n")
            if not args.quiet and (rec["step"] % 100 == 0 or rec["step"] == cfg.steps - 1):
                print(f"step {rec['step']:5d}  lr {rec['lr']:.2e}  loss {rec['loss']:.4f}", file=sys.stderr)

        try:
            params, _ = train(toks, mcfg, cfg.train_config(), mask_id=vocab.mask_id, log=emit)
        except TrainingError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAIL
    checkpoint.save(cfg.out, params, mcfg)
    print(f"wrote {cfg.out} and {log_path}", file=sys.stderr)
    return EXIT_OK


def _sample_seqs(pred, vocab, L, n, scfg, trajectory=False):
    out = generate_batch(pred, L, n, scfg, vocab, trajectory=trajectory)
    if trajectory:
        seqs, trajs = out
        return [str(detokenize(s, vocab)) for s in seqs], trajs
    return [str(detokenize(s, vocab)) for s in out], None


def cmd_sample(args) -> int:
    cfg = _run_config(args, checkpoint=args.checkpoint, strategy=args.strategy, temperature=args.temp,
                      sample_steps=args.steps, seed=args.seed, schedule=args.schedule, out=args.out)
    pred, mcfg, vocab = _load_model(cfg.checkpoint)
    L = _token_length(args, vocab.k)
    if L > mcfg.max_len:
        raise UsageError(f"{L} tokens exceeds the checkpoint's max_len={mcfg.max_len}")
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    scfg = cfg.sampler_config()
    seqs, trajs = _sample_seqs(pred, vocab, L, args.n, scfg, trajectory=bool(args.trajectory))
    comment = _comment(cfg, strategy=scfg.strategy, temperature=scfg.temperature, steps=scfg.steps,
                       schedule=scfg.schedule, tokens=L)
    recs = [(f"gen_{scfg.seed}_{i}", s) for i, s in enumerate(seqs)]
    _write_text(cfg.out or None, format_fasta(recs, comments=[comment]))
    if trajs is not None:
        with open(args.trajectory, "w") as fh:
            fh.write(json.dumps({"provenance": cfg.provenance()}) + "\n")
            for i, traj in enumerate(trajs):
                for rec in traj:
                    fh.write(json.dumps({"sequence": i, **json.loads(rec.to_json())}) + "\n")
    return EXIT_OK


def _seqs(path, what):
    return [s for _, s in _read_records(path, what=what)]


def cmd_eval(args) -> int:
    cfg = _run_config(args, seed=args.seed)
    gen, tr, ref = _seqs(args.generated, "generated"), _seqs(args.train, "train"), _seqs(args.reference, "reference")
    try:
        rep = evaluate(gen, tr, ref, KmerSpectrumEmbedder(args.embedder_k))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    doc = {"provenance": cfg.provenance(), **rep.to_dict()}
    _write_text(args.out, json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


AXES = ("steps", "temp", "strategy")


def _parse_values(axis: str, raw: str):
    vals = [v.strip() for v in raw.split(",") if v.strip()]
    if not vals:
        raise UsageError("--values is empty")
    try:
        if axis == "steps":
            return [int(v) for v in vals]
        if axis == "temp":
            return [float(v) for v in vals]
    except ValueError:
        raise UsageError(f"cannot parse --values {raw!r} for axis {axis}") from None
    return vals


def cmd_ablate(args) -> int:
    if args.axis not in AXES:
        raise UsageError(f"unknown axis {args.axis!r}; choose from {', '.join(AXES)}")
    values = _parse_values(args.axis, args.values)
    cfg = _run_config(args, checkpoint=args.checkpoint, seed=args.seed, strategy=args.strategy,
                      temperature=args.temp, sample_steps=args.steps, out=args.out)
    pred, mcfg, vocab = _load_model(cfg.checkpoint)
    L = _token_length(args, vocab.k)
    tr, ref = _seqs(args.train, "train"), _seqs(args.reference, "reference")
    embedder = KmerSpectrumEmbedder(args.embedder_k)
    field = {"steps": "steps", "temp": "temperature", "strategy": "strategy"}[args.axis]
    rows = []
    for v in values:
        base = cfg.sampler_config()
        try:
            scfg = SamplerConfig(**{**base.__dict__, field: v})
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        seqs, _ = _sample_seqs(pred, vocab, L, args.n, scfg)
        rep = evaluate(seqs, tr, ref, embedder).to_dict()
        rows.append({args.axis: v, **{f: rep[f] for f in REPORT_FIELDS if f != "embedder"}})
        if not args.quiet:
            print(f"{args.axis}={v}  frechet={rep['frechet']:.4f}", file=sys.stderr)
    out = open(cfg.out, "w", newline="") if cfg.out else sys.stdout
    try:
        out.write(f"# {_comment(cfg, axis=args.axis, n=args.n, tokens=L, embedder_k=args.embedder_k)}\n")
        w = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = TinyTransformerConfig(layers=2, heads=2, model_dim=16, ff_dim=24, vocab_size=4 ** 3 + 9, max_len=16)
    rep = gradcheck(cfg, seed=args.seed, n_states=args.states, coords_per_group=args.coords, corrupt=args.corrupt)
    print(f"gradcheck seed={args.seed} states={args.states} coords/group={args.coords}")
    for name, err in rep.per_group.items():
        print(f"  {name:16s} {err:.3e}")
    name, flat, analytic, numeric = rep.worst
    where = f"{name}{list(map(int, np.unravel_index(flat, param_shapes(cfg)[name])))}"
    print(f"max relative error {rep.max_error:.3e} at {where} (analytic {analytic:.6e}, numeric {numeric:.6e})")
    if rep.passed:
        print("PASS")
        return EXIT_OK
    print(f"FAIL: worst coordinate {where} has relative error {rep.max_error:.3e} >= 1e-4")
    return EXIT_FAIL


def cmd_show_config(args) -> int:
    sys.stdout.write(dump_config(_run_config(args)))
    return EXIT_OK


# --- parser ---------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="maskdna", description="Masked discrete diffusion for DNA sequences.")
    p.add_argument("--version", action="version", version=f"maskdna {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, fn, help_):
        s = sub.add_parser(name, help=help_)
        s.set_defaults(func=fn)
        return s

    s = cmd("build-vocab", cmd_build_vocab, "write the k-mer vocabulary file")
    s.add_argument("--k", type=int, default=6)
    s.add_argument("--out", help="output path (default vocab_k<k>.txt)")

    s = cmd("make-corpus", cmd_make_corpus, "write the synthetic motif corpus as FASTA")
    s.add_argument("--n", type=int, default=4096)
    s.add_argument("--length", type=int, default=576, help="bases per sequence")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--split", type=int, default=0, help="independent stream index (0 train, 1 held-out, ...)")
    s.add_argument("--out")

    s = cmd("train", cmd_train, "train a predictor and write a checkpoint")
    s.add_argument("--corpus")
    s.add_argument("--config", help="key=value run configuration")
    s.add_argument("--out", help="checkpoint path")
    s.add_argument("--log", help="JSONL log path (default <out>.log.jsonl)")
    s.add_argument("--seed", type=int)
    s.add_argument("--steps", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--k", type=int)
    s.add_argument("--quiet", action="store_true")

    def sampling_flags(s):
        s.add_argument("--checkpoint")
        s.add_argument("--config")
        s.add_argument("--len", type=int, default=576, help="length in bases, a multiple of k")
        s.add_argument("--tokens", type=int, help="length in tokens (overrides --len)")
        s.add_argument("--strategy", help=f"one of {', '.join(STRATEGIES)}")
        s.add_argument("--temp", type=float)
        s.add_argument("--steps", type=int)
        s.add_argument("--schedule")
        s.add_argument("--seed", type=int)
        s.add_argument("--out")

    s = cmd("sample", cmd_sample, "generate sequences from a checkpoint")
    sampling_flags(s)
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--trajectory", metavar="PATH", help="write per-step JSONL records here")

    s = cmd("eval", cmd_eval, "compute diversity, novelty, GC ratio and Frechet distance")
    s.add_argument("--generated", required=True)
    s.add_argument("--train", required=True)
    s.add_argument("--reference", required=True)
    s.add_argument("--embedder-k", type=int, default=4)
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")

    s = cmd("ablate", cmd_ablate, "sweep one sampler setting and tabulate metrics")
    sampling_flags(s)
    s.add_argument("--axis", required=True, help=f"one of {', '.join(AXES)}")
    s.add_argument("--values", required=True, help="comma separated")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--train", required=True)
    s.add_argument("--reference", required=True)
    s.add_argument("--embedder-k", type=int, default=4)
    s.add_argument("--quiet", action="store_true")

    s = cmd("gradcheck", cmd_gradcheck, "finite-difference check of the predictor backward pass")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--states", type=int, default=5)
    s.add_argument("--coords", type=int, default=50)
    s.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)

    s = cmd("show-config", cmd_show_config, "print the effective run configuration")
    s.add_argument("--config")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
