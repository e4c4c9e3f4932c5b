"""Central finite-difference verification of the transformer backward pass."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..diffusion import forward_mask, masked_nll
from ..rng import make_rng
from .training import loss_and_grads
from .transformer import TinyTransformerConfig, forward, init_params

TOLERANCE = 1e-4
# denominators below this are treated as this (absolute-error regime)
REL_FLOOR = 1e-6
# assumed rounding error of one loss evaluation, in units in the last place
ROUNDOFF_ULPS = 8


@dataclass
class GradcheckReport:
    max_error: float
    per_group: dict = field(default_factory=dict)
    worst: tuple = ()
    checked: int = 0

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def relative_error(analytic: float, numeric: float, floor: float = REL_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def resolution_floor(loss: float, h: float) -> float:
    """Smallest gradient a central difference at step ``h`` can resolve to ``TOLERANCE``.

    Rounding in the two loss evaluations limits the difference quotient to an
    absolute accuracy of about ``ulp(loss) / (2h)``; components below that
    scale divided by the tolerance are compared in absolute terms.
    """
    noise = ROUNDOFF_ULPS * np.spacing(abs(loss)) / (2 * h)
    return max(REL_FLOOR, noise / TOLERANCE)


def random_params(cfg: TinyTransformerConfig, rng: np.random.Generator) -> dict:
    params = init_params(cfg, rng)
    for p in params.values():
        p += rng.normal(0.0, 0.1, p.shape)
    return params


def gradcheck(cfg: TinyTransformerConfig, seed: int = 0, n_states: int = 5, coords_per_group: int = 50,
              seq_len: int = 8, h: float = 1e-5, corrupt: bool = False) -> GradcheckReport:
    """Compare analytic gradients of the masked diffusion loss with central differences.

    For each of ``n_states`` random masked states, ``coords_per_group``
    random coordinates of every parameter tensor are perturbed by ``±h``.
    ``corrupt`` scales the analytic gradient by 1.01 as a negative control.
    """
    rng = make_rng(seed, 5)
    params = random_params(cfg, rng)
    n_kmers = cfg.vocab_size - 9
    mask_id = n_kmers
    report = GradcheckReport(0.0)
    for s in range(n_states):
        x0 = rng.integers(0, n_kmers, size=seq_len)
        state = forward_mask(x0, float(rng.uniform(0.2, 1.0)), rng, mask_id)
        X0, XT, M, T = x0[None], state.ids[None], state.mask[None], np.array([state.t])
        f0, grads = loss_and_grads(params, cfg, X0, XT, M, T)
        floor = resolution_floor(f0, h)

        def loss():
            return float(masked_nll(forward(XT, params, cfg), X0, M, T)[0])

        for name, p in params.items():
            flat = p.reshape(-1)
            g = grads[name].reshape(-1) * (1.01 if corrupt else 1.0)
            picks = rng.choice(flat.size, size=min(coords_per_group, flat.size), replace=False)
            for j in picks:
                orig = flat[j]
                flat[j] = orig + h
                up = loss()
                flat[j] = orig - h
                down = loss()
                flat[j] = orig
                num = (up - down) / (2 * h)
                err = relative_error(float(g[j]), num, floor)
                report.checked += 1
                if err > report.per_group.get(name, -1.0):
                    report.per_group[name] = err
                if err > report.max_error or not report.worst:
                    report.max_error = err
                    report.worst = (name, int(j), float(g[j]), float(num))
    return report
