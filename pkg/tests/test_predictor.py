import numpy as np
import pytest

from maskdna.diffusion import diffusion_loss
from maskdna.predictor import (TinyTransformer, TinyTransformerConfig, backward, extract_embeddings, fit_tabular,
                               forward, init_params, mean_pool)
from maskdna.predictor.gradcheck import gradcheck
from maskdna.predictor.training import TrainConfig, TrainingError, lr_at, train
from maskdna.rng import make_rng
from maskdna.seqio import TokenSequence, build_vocab

V1 = build_vocab(1)
V3 = build_vocab(3)
SMALL = TinyTransformerConfig(layers=2, heads=2, model_dim=16, ff_dim=24, vocab_size=V3.size, max_len=32)


@pytest.fixture(scope="module")
def params():
    p = init_params(SMALL, make_rng(0))
    # move away from the near-symmetric init so every path carries signal
    rng = np.random.default_rng(1)
    return {k: v + rng.normal(0, 0.2, v.shape) for k, v in p.items()}


def test_tabular_single_point():
    tab = fit_tabular([(0, 1)], 2, V1)
    row = np.exp(tab.log_probs([V1.mask_id, 1]))[0]
    assert row[0] == pytest.approx(1.0, abs=1e-8)


def test_tabular_uniform_corpus():
    corpus = [(a, b) for a in range(4) for b in range(4)]
    tab = fit_tabular(corpus, 2, V1)
    for state, rows in tab.table.items():
        for i, s in enumerate(state):
            if s == V1.mask_id:
                assert np.allclose(rows[i, :4], 0.25)


def test_tabular_count_ratio():
    tab = fit_tabular([(0, 0)] * 3 + [(0, 3)], 2, V1)
    row = np.exp(tab.log_probs([0, V1.mask_id]))[1]
    assert row[0] == pytest.approx(0.75, abs=1e-8) and row[3] == pytest.approx(0.25, abs=1e-8)
    assert row[4:].sum() == 0


def test_tabular_length_mismatch():
    with pytest.raises(ValueError):
        fit_tabular([(0, 1, 2)], 2, V1)


def test_forward_rows_normalise(params):
    ids = make_rng(2).integers(0, V3.size, size=(3, 10))
    lp = forward(ids, params, SMALL)
    assert lp.shape == (3, 10, V3.size)
    assert np.allclose(np.exp(lp).sum(-1), 1.0, atol=1e-6)


def test_all_mask_rows_identical_without_rope():
    p = init_params(SMALL, make_rng(3))
    lp = forward([V3.mask_id, V3.mask_id], p, SMALL, rope=False)
    assert np.allclose(lp[0], lp[1], atol=1e-12)


def test_bidirectional_context(params):
    m = V3.mask_id
    a = forward([m, 5, 9, 30], params, SMALL)
    b = forward([m, 9, 5, 30], params, SMALL)
    assert not np.allclose(a[0], b[0])
    # a change strictly to the right of a masked position is visible to it
    c = forward([m, 5, 9, 31], params, SMALL)
    assert not np.allclose(a[0], c[0])


def test_forward_shape_errors(params):
    with pytest.raises(ValueError, match="max_len"):
        forward(np.zeros(40, dtype=int), params, SMALL)
    with pytest.raises(ValueError):
        forward([V3.size], params, SMALL)


def test_backward_zero_upstream(params):
    lp, cache = forward([1, 2, V3.mask_id], params, SMALL, return_cache=True)
    grads = backward(cache, params, SMALL, np.zeros_like(lp))
    assert all(not np.any(g) for g in grads.values())


def test_backward_needs_cache(params):
    with pytest.raises(ValueError, match="cache"):
        backward(None, params, SMALL, np.zeros((3, V3.size)))


@pytest.mark.parametrize("tied", [False, True])
def test_gradcheck_small(tied):
    cfg = TinyTransformerConfig(layers=2, heads=2, model_dim=8, ff_dim=10, vocab_size=V1.size,
                                max_len=16, tie_embeddings=tied)
    report = gradcheck(cfg, seed=4, n_states=2, coords_per_group=10, seq_len=5)
    assert report.max_error < 1e-4, report.worst


def test_gradcheck_detects_corruption():
    cfg = TinyTransformerConfig(layers=1, heads=2, model_dim=8, ff_dim=10, vocab_size=V1.size, max_len=16)
    report = gradcheck(cfg, seed=4, n_states=1, coords_per_group=10, seq_len=5, corrupt=True)
    assert report.max_error > 1e-4


def test_unmasked_positions_give_no_gradient(params):
    from maskdna.predictor.training import loss_and_grads
    x0 = np.array([[3, 4, 5, 6]])
    xt = np.array([[3, V3.mask_id, 5, 6]])
    mask = xt == V3.mask_id
    t = np.array([0.5])
    _, g1 = loss_and_grads(params, SMALL, x0, xt, mask, t)
    x0b = np.array([[3, 4, 5, 6]])
    _, g2 = loss_and_grads(params, SMALL, x0b, xt, mask, t)
    # changing targets at unmasked positions cannot matter
    x0c = np.array([[7, 4, 8, 9]])
    _, g3 = loss_and_grads(params, SMALL, x0c, xt, mask, t)
    for k in g1:
        assert np.array_equal(g1[k], g2[k]) and np.array_equal(g1[k], g3[k])


def test_embeddings_shape_and_pooling(params):
    h = extract_embeddings([1, 2, 3, 4, 5], params, SMALL)
    assert h.shape == (5, SMALL.model_dim)
    one = extract_embeddings([7], params, SMALL)
    assert np.array_equal(mean_pool(one), one[0])
    shuffled = extract_embeddings([5, 3, 1, 4, 2], params, SMALL)
    assert not np.allclose(mean_pool(h), mean_pool(shuffled))


def test_lr_schedule_endpoints():
    total, peak = 2000, 8e-5
    assert lr_at(0, total, peak) == 0.0
    assert lr_at(100, total, peak) == pytest.approx(peak)
    assert lr_at(total - 1, total, peak) < 1e-3 * peak
    lrs = [lr_at(s, total, peak) for s in range(total)]
    assert max(lrs) == pytest.approx(peak)
    assert all(a <= b for a, b in zip(lrs[:100], lrs[1:101]))
    assert all(a >= b for a, b in zip(lrs[100:-1], lrs[101:]))


def test_memorises_single_sequence():
    # a shift-invariant target: with no absolute positions an all-mask input cannot locate anything else
    cfg = TinyTransformerConfig(layers=1, heads=2, model_dim=16, ff_dim=24, vocab_size=V1.size, max_len=16)
    seq = TokenSequence([2] * 6, 1)
    _, log = train([seq], cfg, TrainConfig(steps=300, batch_size=4, lr=1e-2, seed=0), mask_id=V1.mask_id)
    first = np.mean([r["loss"] for r in log[:10]])
    last = np.mean([r["loss"] for r in log[-20:]])
    assert last < 0.05 * first


def test_all_mask_input_is_position_blind(params):
    # RoPE rotates queries and keys only, so identical inputs give identical rows
    logp = forward(np.full(7, V3.mask_id), params, SMALL)
    assert np.allclose(logp, logp[0], atol=1e-12)


def test_training_is_deterministic():
    cfg = TinyTransformerConfig(layers=1, heads=2, model_dim=8, ff_dim=8, vocab_size=V1.size, max_len=8)
    corpus = [TokenSequence(make_rng(9, i).integers(0, 4, 6), 1) for i in range(10)]
    tc = TrainConfig(steps=20, batch_size=3, lr=1e-2, seed=3)
    p1, l1 = train(corpus, cfg, tc, mask_id=V1.mask_id)
    p2, l2 = train(corpus, cfg, tc, mask_id=V1.mask_id)
    assert l1 == l2
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)


def test_training_reduces_held_out_loss():
    cfg = TinyTransformerConfig(layers=1, heads=2, model_dim=16, ff_dim=24, vocab_size=V1.size, max_len=16)
    # strongly structured toy language: x, x+1, x+2, ... (mod 4)
    def seqs(n, split):
        starts = make_rng(1, split).integers(0, 4, n)
        return [TokenSequence((s + np.arange(8)) % 4, 1) for s in starts]
    tc = TrainConfig(steps=400, batch_size=8, lr=1e-2, seed=0)
    p0 = init_params(cfg, make_rng(tc.seed, 0))
    p, _ = train(seqs(64, 0), cfg, tc, mask_id=V1.mask_id)
    held = seqs(64, 1) * 8
    before = diffusion_loss(TinyTransformer(p0, cfg), held, make_rng(5), V1.mask_id).value
    after = diffusion_loss(TinyTransformer(p, cfg), held, make_rng(5), V1.mask_id).value
    assert after <= 0.5 * before


def test_nan_aborts_with_step():
    cfg = TinyTransformerConfig(layers=1, heads=2, model_dim=8, ff_dim=8, vocab_size=V1.size, max_len=8)
    p = init_params(cfg, make_rng(0))
    p["l0.wq"] = p["l0.wq"] * np.nan
    with pytest.raises(TrainingError, match="step 0"):
        train([TokenSequence([0, 1, 2], 1)], cfg, TrainConfig(steps=3, batch_size=1), mask_id=V1.mask_id, params=p)


def test_train_rejects_zero_steps():
    with pytest.raises(ValueError, match="steps must be"):
        TrainConfig(steps=0)


def test_float32_mode_runs():
    cfg = TinyTransformerConfig(layers=1, heads=2, model_dim=8, ff_dim=8, vocab_size=V1.size, max_len=8)
    p, log = train([TokenSequence([0, 1, 2, 3], 1)], cfg,
                   TrainConfig(steps=5, batch_size=2, precision="float32"), mask_id=V1.mask_id)
    assert p["embed"].dtype == np.float32 and np.isfinite(log[-1]["loss"])
