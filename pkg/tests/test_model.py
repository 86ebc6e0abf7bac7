"""Unit tests for the dense network, losses, and optimizers."""

import numpy as np
import pytest

from owadapt.errors import ConfigurationError, InvalidLabelError
from owadapt.model import (SGD, Adam, DenseNet, apply_gradient, cross_entropy,
                           entropy, entropy_batch, make_optimizer, softmax)


def small_net(seed=0, sizes=(3, 5, 4, 2), latent_index=2, frozen_boundary=None):
    return DenseNet(list(sizes), latent_index, frozen_boundary,
                    rng=np.random.default_rng(seed))


# -- softmax / entropy / cross-entropy ---------------------------------------

def test_softmax_sums_to_one_and_is_shift_invariant():
    z = np.array([1.0, -2.0, 0.5])
    q = softmax(z)
    assert q.shape == (3,)
    assert np.all(q > 0)
    assert abs(q.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(softmax(z + 123.4), q, atol=1e-12)


def test_softmax_hand_value():
    q = softmax(np.array([0.0, np.log(3.0)]))
    np.testing.assert_allclose(q, [0.25, 0.75], atol=1e-12)


def test_softmax_batch_rows():
    Z = np.array([[0.0, 0.0], [5.0, 5.0]])
    Q = softmax(Z)
    np.testing.assert_allclose(Q, [[0.5, 0.5], [0.5, 0.5]], atol=1e-12)


def test_entropy_uniform_and_delta():
    assert entropy(np.ones(4) / 4.0) == pytest.approx(np.log(4.0), abs=1e-12)
    # 0 * log 0 := 0 so a one-hot vector has exactly zero entropy
    assert entropy(np.array([1.0, 0.0, 0.0])) == 0.0


def test_entropy_batch_matches_scalar():
    Q = softmax(np.random.default_rng(1).normal(size=(6, 5)))
    np.testing.assert_allclose(entropy_batch(Q), [entropy(q) for q in Q], atol=1e-12)


def test_cross_entropy_hand_value_and_clamp():
    q = np.array([0.25, 0.75])
    assert cross_entropy(q, 1) == pytest.approx(-np.log(0.75), abs=1e-12)
    # clamped at 1e-12 so exact zeros stay finite
    assert cross_entropy(np.array([1.0, 0.0]), 1) == pytest.approx(-np.log(1e-12))


def test_cross_entropy_rejects_bad_label():
    with pytest.raises(InvalidLabelError):
        cross_entropy(np.array([0.5, 0.5]), 2)


# -- network construction and forward passes ---------------------------------

def test_constructor_validation():
    with pytest.raises(ConfigurationError):
        DenseNet([3, 4, 2], latent_index=1)     # only 2 layers: no strict middle
    with pytest.raises(ConfigurationError):
        DenseNet([3, 4, 4, 2], latent_index=1)  # latent must be > 1
    with pytest.raises(ConfigurationError):
        DenseNet([3, 4, 4, 2], latent_index=3)  # latent must be < L
    with pytest.raises(ConfigurationError):
        DenseNet([3, 4, 4, 2], latent_index=2, frozen_boundary=5)


def test_forward_is_probability_vector():
    m = small_net()
    q = m.forward(np.array([0.1, -0.2, 0.3]))
    assert q.shape == (2,)
    assert abs(q.sum() - 1.0) < 1e-12


def test_latent_matches_activations_and_head_composes():
    m = small_net()
    x = np.array([0.4, 0.0, -1.2])
    acts = m.activations(x)
    np.testing.assert_allclose(m.latent(x), acts[m.latent_index - 1], atol=1e-15)
    np.testing.assert_allclose(m.head_forward(m.latent(x)), m.forward(x), atol=1e-15)


def test_forward_batch_matches_rowwise():
    m = small_net()
    X = np.random.default_rng(2).normal(size=(5, 3))
    Q = m.forward_batch(X)
    for i in range(5):
        np.testing.assert_allclose(Q[i], m.forward(X[i]), atol=1e-12)


def test_input_width_checked():
    with pytest.raises(ConfigurationError):
        small_net().forward(np.zeros(4))


def test_copy_is_independent():
    m = small_net()
    c = m.copy()
    c.weights[0][0, 0] += 1.0
    assert m.weights[0][0, 0] != c.weights[0][0, 0]


def test_zeros_constructor():
    m = DenseNet.zeros([3, 4, 4, 2], latent_index=2)
    assert all(np.all(w == 0.0) for w in m.weights)
    q = m.forward(np.ones(3))
    np.testing.assert_allclose(q, [0.5, 0.5], atol=1e-15)


# -- frozen/learnable split ---------------------------------------------------

def test_frozen_checksum_tracks_only_frozen_layers():
    m = small_net()
    before = m.frozen_checksum()
    m.weights[-1][0, 0] += 1.0          # learnable layer
    assert m.frozen_checksum() == before
    m.weights[0][0, 0] += 1.0           # frozen layer
    assert m.frozen_checksum() != before


def test_apply_gradient_scopes():
    m = small_net()
    gw = [np.ones_like(w) for w in m.weights]
    gb = [np.ones_like(b) for b in m.biases]
    frozen_before = [w.copy() for w in m.weights[:m.frozen_boundary]]
    learnable_before = m.weights[-1].copy()
    apply_gradient(m, (gw, gb), eta=0.1, scope="learnable")
    for k, w in enumerate(frozen_before):
        np.testing.assert_array_equal(m.weights[k], w)
    np.testing.assert_allclose(m.weights[-1], learnable_before - 0.1, atol=1e-15)
    apply_gradient(m, (gw, gb), eta=0.1, scope="all")
    assert not np.array_equal(m.weights[0], frozen_before[0])


def test_apply_gradient_validation():
    m = small_net()
    gw, gb = m.zero_grads()
    with pytest.raises(ConfigurationError):
        apply_gradient(m, (gw[:-1], gb), 0.1)
    with pytest.raises(ConfigurationError):
        apply_gradient(m, (gw, gb), 0.1, scope="half")
    gw[0] = np.zeros((1, 1))
    with pytest.raises(ConfigurationError):
        apply_gradient(m, (gw, gb), 0.1)


# -- gradients against the loss definition ------------------------------------

def test_ce_gradients_rejects_bad_label():
    m = small_net()
    with pytest.raises(InvalidLabelError):
        m.ce_gradients(np.zeros(3), 7)


def test_ce_gradients_accumulate_into_supplied_buffers():
    m = small_net()
    x = np.array([0.3, -0.1, 0.8])
    _, (gw1, gb1) = m.ce_gradients(x, 0)
    buf = m.zero_grads()
    m.ce_gradients(x, 0, grads=buf)
    m.ce_gradients(x, 0, grads=buf)
    np.testing.assert_allclose(buf[0][0], 2.0 * gw1[0], atol=1e-12)


def test_latent_gradients_shape_and_direction():
    # moving along -grad must decrease a linear functional of the latent
    m = small_net()
    x = np.array([0.2, 0.5, -0.3])
    g = np.ones(m.latent_dim)
    gw, gb = m.latent_gradients(x, g)
    before = float(g @ m.latent(x))
    apply_gradient(m, (gw, gb), eta=0.01, scope="all")
    after = float(g @ m.latent(x))
    assert after < before


# -- optimizers ----------------------------------------------------------------

def test_sgd_matches_manual_step():
    m = small_net()
    ref = m.copy()
    _, grads = m.ce_gradients(np.array([1.0, 0.0, -1.0]), 1)
    SGD(0.05).step(m, grads)
    apply_gradient(ref, grads, 0.05)
    np.testing.assert_array_equal(m.weights[0], ref.weights[0])


def test_adam_first_step_is_signed_eta():
    # with bias correction the first Adam step is eta * g / (|g| + eps)
    m = DenseNet.zeros([3, 4, 4, 2], latent_index=2)
    gw = [np.zeros_like(w) for w in m.weights]
    gb = [np.zeros_like(b) for b in m.biases]
    gw[0][0, 0] = 2.0
    gw[0][0, 1] = -3.0
    Adam(eta=0.1).step(m, (gw, gb))
    assert m.weights[0][0, 0] == pytest.approx(-0.1, rel=1e-6)
    assert m.weights[0][0, 1] == pytest.approx(0.1, rel=1e-6)


def test_adam_respects_learnable_scope():
    m = small_net()
    frozen = [w.copy() for w in m.weights[:m.frozen_boundary]]
    gw = [np.ones_like(w) for w in m.weights]
    gb = [np.ones_like(b) for b in m.biases]
    opt = Adam(eta=0.1)
    for _ in range(3):
        opt.step(m, (gw, gb), scope="learnable")
    for k, w in enumerate(frozen):
        np.testing.assert_array_equal(m.weights[k], w)


def test_make_optimizer():
    assert isinstance(make_optimizer("adam", 0.1), Adam)
    assert isinstance(make_optimizer("sgd", 0.1), SGD)
    with pytest.raises(ConfigurationError):
        make_optimizer("lbfgs", 0.1)
