"""Train a small predictor on the motif corpus, sample from it, and score the samples.

A reduced run (smaller model, 600 steps, 48-token sequences) that finishes in
a couple of minutes on a laptop. The acceptance suite runs the full-size
version.
"""
import numpy as np

from maskdna.corpus import MOTIF, motif_corpus, uniform_sequences
from maskdna.metrics import KmerSpectrumEmbedder, evaluate
from maskdna.predictor import TinyTransformer, TinyTransformerConfig
from maskdna.predictor.training import TrainConfig, train
from maskdna.sampler import SamplerConfig, generate_batch
from maskdna.seqio import build_vocab, detokenize, tokenize

vocab = build_vocab(6)
bases = 288  # 48 tokens
train_seqs = motif_corpus(1024, bases, seed=0, split=0)
held = motif_corpus(200, bases, seed=0, split=1)
print("example:", train_seqs[0][:90], "...")
print("motif", MOTIF, "at", train_seqs[0].find(MOTIF))

cfg = TinyTransformerConfig(layers=2, heads=4, model_dim=32, ff_dim=86, vocab_size=vocab.size, max_len=64)
tc = TrainConfig(steps=600, batch_size=8, lr=1e-3, seed=1)


def progress(rec):
    if rec["step"] % 100 == 0:
        print(f"step {rec['step']:4d}  lr {rec['lr']:.1e}  loss {rec['loss']:8.2f}  |g| {rec['grad_norm']:.2f}")


params, log = train([tokenize(s, vocab) for s in train_seqs], cfg, tc, mask_id=vocab.mask_id, log=progress)
model = TinyTransformer(params, cfg)

embedder = KmerSpectrumEmbedder(4)
for T in (1, 10, 48):
    gen = generate_batch(model, bases // 6, 100, SamplerConfig(steps=T, seed=3), vocab)
    seqs = [str(detokenize(g, vocab)) for g in gen]
    rep = evaluate(seqs, train_seqs[:300], held, embedder)
    print(f"T={T:2d}  frechet {rep.frechet:.5f}  diversity {rep.diversity:.1f}  "
          f"novelty {rep.novelty:.1f}  GC {rep.gc_ratio_mean:.3f}  motif {np.mean([MOTIF in s for s in seqs]):.2f}")

rep = evaluate(uniform_sequences(100, bases, seed=4), train_seqs[:300], held, embedder)
print(f"random frechet {rep.frechet:.5f}")
# the background statistics are learned quickly; motif recall needs the full-size run
