"""Tokens, forward masking, and the loss as a bound on the exact likelihood.

Runs in a few seconds.
"""
import numpy as np

from maskdna.diffusion import diffusion_loss, enumerate_model_distribution, exact_nll, forward_mask
from maskdna.predictor import fit_tabular
from maskdna.rng import make_rng
from maskdna.seqio import build_vocab, detokenize, tokenize

# 6-mer vocabulary: 4096 k-mers then the special tokens
vocab = build_vocab(6)
print(vocab, "mask id", vocab.mask_id)

seq = "ACGTACGTTGCAACGTACGT"
toks = tokenize(seq, vocab)  # trailing 2 bases are dropped
print(toks.ids, "->", detokenize(toks, vocab))

# forward process: each token masked independently with probability t
rng = make_rng(0)
for t in (0.1, 0.5, 0.9):
    s = forward_mask(np.arange(20), t, rng, mask_id=vocab.mask_id)
    print(f"t={t}: masked {s.mask.sum():2d}/20", "".join("M" if m else "." for m in s.mask))

# a tiny language over single bases (k=1), two tokens long
v1 = build_vocab(1)
corpus = [(0, 1)] * 5 + [(1, 0)] * 3 + [(2, 2)] * 3 + [(3, 0)] * 2 + [(0, 3), (1, 2), (3, 3)]
tab = fit_tabular(corpus, 2, v1)  # exact conditional counts: the loss minimiser

table = enumerate_model_distribution(tab, 2, v1)
top = sorted(table.items(), key=lambda kv: -kv[1])[:5]
print("most likely pairs under random-order decoding:", [(k, round(p, 4)) for k, p in top])

nll = exact_nll(tab, corpus, v1)
loss = diffusion_loss(tab, corpus * 2000, make_rng(1), v1.mask_id)
print(f"exact NLL {nll:.4f}  <=  Monte-Carlo loss {loss.value:.4f} +- {loss.stderr:.4f}")
