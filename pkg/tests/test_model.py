import math

import numpy as np
import pytest

from addloss import geometry as geo
from addloss import gradients as gr
from addloss.errors import DimensionMismatch
from addloss.model import (ModelConfig, MlpParams, backward, cross_entropy, forward,
                           init_params, load_checkpoint, save_checkpoint, softmax)


def small_net(rng, activation="tanh", d=4, c=3):
    return init_params(ModelConfig(hidden=(12, 10), embed_dim=3, activation=activation), d, c, rng)


def test_forward_hand_computed_single_layer():
    # one linear extractor layer (identity-like), head with known weights
    p = MlpParams(weights=[np.array([[2.0, 0.0], [0.0, 1.0]])], biases=[np.zeros(2)],
                  head_weight=np.array([[1.0, -1.0], [0.5, 2.0]]), head_bias=np.array([0.1, 0.0]))
    tr = forward(p, np.array([[0.6, 0.8]]))
    # u = (1.2, 0.8); z = u / sqrt(2.08)
    z = np.array([1.2, 0.8]) / math.sqrt(2.08)
    expected = np.array([z[0] + 0.5 * z[1] + 0.1, -z[0] + 2.0 * z[1]])
    np.testing.assert_allclose(tr.logits[0], expected, rtol=1e-15)


def test_forward_unit_embeddings_and_softmax_rows(rng):
    p = init_params(ModelConfig(), 5, 4, rng)
    tr = forward(p, rng.normal(size=(20, 5)) * 10)
    np.testing.assert_allclose(np.linalg.norm(tr.z, axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(tr.probs.sum(axis=1), 1.0, atol=1e-9)


def test_zero_head_gives_uniform_softmax(rng):
    p = init_params(ModelConfig(), 5, 4, rng)
    p.head_weight[:] = 0.0
    tr = forward(p, rng.normal(size=(3, 5)))
    np.testing.assert_allclose(tr.probs, 0.25, atol=1e-15)


def test_forward_dimension_mismatch(rng):
    p = init_params(ModelConfig(), 5, 4, rng)
    with pytest.raises(DimensionMismatch):
        forward(p, np.zeros((2, 6)))


def test_forward_is_deterministic(rng):
    p = init_params(ModelConfig(), 5, 4, rng)
    x = rng.normal(size=(8, 5))
    assert np.array_equal(forward(p, x).logits, forward(p, x).logits)


def test_cross_entropy_values():
    y = np.array([[0.0, 1.0, 0.0]])
    assert cross_entropy(y, y)[0] == 0.0
    assert cross_entropy(np.full((1, 4), 0.25), np.eye(4)[:1])[0] == pytest.approx(math.log(4))
    loss, _ = cross_entropy(np.array([[0.25, 0.75]]), np.array([[0.5, 0.5]]))
    assert loss == pytest.approx(-0.5 * (math.log(0.25) + math.log(0.75)), rel=1e-15)


def test_cross_entropy_clamps_log():
    loss, _ = cross_entropy(np.array([[0.0, 1.0]]), np.array([[1.0, 0.0]]))
    assert loss == pytest.approx(-math.log(1e-12))


def test_softmax_shift_invariance(rng):
    logits = rng.normal(size=(5, 4))
    y = geo.one_hot(rng.integers(0, 4, 5), 4)
    p1, p2 = softmax(logits), softmax(logits + 123.0)
    np.testing.assert_allclose(p1, p2, atol=1e-9)
    assert cross_entropy(p1, y)[0] == pytest.approx(cross_entropy(p2, y)[0], abs=1e-9)


def _total_fd(p, x, y, w, h=1e-5):
    def total(q):
        tr = forward(q, x)
        ce, _ = cross_entropy(tr.probs, y)
        return ce + gr.add_loss_hard_grad(tr.raw, y, w)[0]

    out = {}
    for name, arr in p.named_arrays().items():
        def f(v, name=name):
            q = p.copy()
            q.named_arrays()[name][...] = v
            return total(q)
        out[name] = gr.finite_difference_grad(f, arr, h)
    return out


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_backward_matches_fd(rng, activation):
    p = small_net(rng, activation)
    x = rng.normal(size=(6, 4))
    y = geo.one_hot([0, 1, 2, 0, 1, 2], 3)
    w = geo.LossWeights(*rng.uniform(0, 2, 4))
    tr = forward(p, x)
    _, dl = cross_entropy(tr.probs, y)
    _, de = gr.add_loss_hard_grad(tr.raw, y, w)
    g = backward(p, tr, dl, de)
    fd = _total_fd(p, x, y, w)
    for name in fd:
        assert gr.vector_relative_error(g.arrays[name], fd[name]) <= 1e-5, name


def test_backward_additivity(rng):
    p = small_net(rng)
    x = rng.normal(size=(6, 4))
    y = geo.one_hot([0, 1, 2, 0, 1, 2], 3)
    tr = forward(p, x)
    _, dl = cross_entropy(tr.probs, y)
    _, de = gr.add_loss_hard_grad(tr.raw, y, geo.LossWeights())
    both = backward(p, tr, dl, de)
    ce_only = backward(p, tr, dl, None)
    add_only = backward(p, tr, np.zeros_like(dl), de)
    for name, g in both.arrays.items():
        np.testing.assert_allclose(g, ce_only.arrays[name] + add_only.arrays[name],
                                   rtol=1e-12, atol=1e-15)


def test_backward_zero_embedding_grad_is_pure_ce(rng):
    p = small_net(rng)
    x = rng.normal(size=(4, 4))
    tr = forward(p, x)
    _, dl = cross_entropy(tr.probs, geo.one_hot([0, 1, 2, 0], 3))
    a = backward(p, tr, dl, np.zeros_like(tr.raw))
    b = backward(p, tr, dl, None)
    for name in a.arrays:
        assert np.array_equal(a.arrays[name], b.arrays[name])


def test_checkpoint_roundtrip_is_exact(rng, tmp_path):
    p = init_params(ModelConfig(hidden=(7,), embed_dim=4), 3, 5, rng)
    save_checkpoint(p, tmp_path / "ck.json", meta={"note": "x"})
    q, meta = load_checkpoint(tmp_path / "ck.json")
    assert meta == {"note": "x"}
    assert q.activation == p.activation
    for name, arr in p.named_arrays().items():
        assert np.array_equal(arr, q.named_arrays()[name])


def test_init_is_seeded():
    a = init_params(ModelConfig(), 6, 3, np.random.default_rng(1))
    b = init_params(ModelConfig(), 6, 3, np.random.default_rng(1))
    for name, arr in a.named_arrays().items():
        assert np.array_equal(arr, b.named_arrays()[name])
