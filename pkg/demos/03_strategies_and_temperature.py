"""How the five unmasking strategies and the temperature behave on a fixed predictor."""
import numpy as np

from maskdna.diffusion import MaskedState
from maskdna.predictor import MaskPredictor, fit_tabular
from maskdna.sampler import STRATEGIES, SamplerConfig, apply_temperature, entropy, generate, select_positions
from maskdna.rng import make_rng
from maskdna.seqio import build_vocab

# temperature flattens (tau > 1) or sharpens (tau < 1) the predicted distribution
logits = np.array([2.0, 1.0, 0.2, -1.0])
for tau in (0.5, 1.0, 1.1, 2.0):
    p = apply_temperature(logits, tau)
    print(f"tau={tau:3.1f}", np.round(p, 3), f"entropy {entropy(p):.3f}")

# which positions each rule would reveal first, given per-position distributions
probs = np.array([[0.40, 0.35, 0.25, 0.00],
                  [0.97, 0.01, 0.01, 0.01],
                  [0.50, 0.50, 0.00, 0.00],
                  [0.25, 0.25, 0.25, 0.25]])
tokens = probs.argmax(axis=1)
for s in STRATEGIES[:-1]:
    chosen, conf = select_positions(s, probs, tokens, np.arange(4), 2, make_rng(0))
    print(f"{s:8s} reveals {chosen.tolist()}  scores {np.round(conf, 3).tolist()}")

v1 = build_vocab(1)


class SwappingConfidence(MaskPredictor):
    # confident about position 0 only while nothing is revealed
    vocab_size = v1.size

    def log_probs_batch(self, ids):
        out = []
        for row in np.asarray(ids):
            p = np.zeros((4, self.vocab_size))
            p[:, :4] = 0.25
            if np.all(row == v1.mask_id):
                p[0, :4] = [0.97, 0.01, 0.01, 0.01]
            else:
                p[1:, :4] = [0.01, 0.01, 0.01, 0.97]
            with np.errstate(divide="ignore"):
                out.append(np.log(p))
        return np.stack(out)


# P2 may put a committed token back under the mask when its confidence drops
seq, traj = generate(SwappingConfidence(), 4, SamplerConfig(strategy="p2", steps=4, temperature=1.0), v1,
                     trajectory=True)
for rec in traj:
    print(rec.to_json())
print("final", seq.ids)

# on a tabular oracle every strategy ends with a fully decoded sequence
tab = fit_tabular([(0, 1, 2), (1, 2, 3), (2, 3, 0), (3, 0, 1)], 3, v1)
for s in STRATEGIES:
    print(s, generate(tab, 3, SamplerConfig(strategy=s, steps=3, temperature=1.0, seed=5), v1).ids)
