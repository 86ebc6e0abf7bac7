"""Unit tests for the online post-training stage."""

import numpy as np
import pytest

from owadapt.errors import (ConfigurationError, DegenerateInputError,
                            ValidationError)
from owadapt.model import DenseNet
from owadapt.posttrain import (UNSEEN, DetectThresholds, GateThresholds,
                               PseudoLabelOutcome, adapt_step,
                               cosine_similarity, detect_and_predict,
                               mean_prediction, predict_batch, pseudo_label,
                               run_timestep, should_adapt)
from owadapt.stats import ClassStats


def identity_stats(means):
    means = np.asarray(means, dtype=np.float64)
    k = means.shape[1]
    eye = np.tile(np.eye(k), (len(means), 1, 1))
    return ClassStats(classes=np.arange(len(means)), means=means,
                      covs=eye.copy(), inv_covs=eye.copy(),
                      counts=np.full(len(means), 10))


def net(seed=0):
    return DenseNet([2, 6, 4, 3], latent_index=2, rng=np.random.default_rng(seed))


# -- thresholds ------------------------------------------------------------------

def test_threshold_validation():
    with pytest.raises(ConfigurationError):
        GateThresholds(phi_ent=-0.1)
    with pytest.raises(ConfigurationError):
        GateThresholds(phi_cos=1.5)
    with pytest.raises(ConfigurationError):
        DetectThresholds(psi_md=-1.0)
    GateThresholds(phi_cos=-1.0)  # the closed-gate sentinel is legal


# -- similarity and gating ----------------------------------------------------------

def test_cosine_similarity_hand_values():
    assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0, abs=1e-12)
    assert cosine_similarity([1.0, 1.0], [2.0, 2.0]) == pytest.approx(1.0, abs=1e-12)
    assert cosine_similarity([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(DegenerateInputError):
        cosine_similarity([0.0, 0.0], [1.0, 0.0])


def test_mean_prediction_empty_batch():
    with pytest.raises(ValidationError):
        mean_prediction(net(), np.empty((0, 2)))


def test_should_adapt_requires_both_conditions():
    g = GateThresholds(phi_ent=0.5, phi_cos=0.9)
    h = np.array([0.2, 0.5, 0.8])
    np.testing.assert_array_equal(should_adapt(h, 0.95, g), [False, False, False])
    np.testing.assert_array_equal(should_adapt(h, 0.5, g), [False, True, True])


# -- pseudo-labeling ------------------------------------------------------------------

def confident_model_case():
    """A model that is extremely confident on x, plus far-apart class stats."""
    m = net()
    m.weights[-1] *= 50.0   # sharpen the head -> near-zero entropy
    stats = identity_stats([[10.0, 0.0, 0.0, 0.0], [-10.0, 0.0, 0.0, 0.0],
                            [0.0, 10.0, 0.0, 0.0]][: m.output_dim])
    return m, stats


def test_pseudo_label_model_branch():
    m, stats = confident_model_case()
    x = np.array([0.5, -0.5])
    out = pseudo_label(m, stats, x, GateThresholds(phi_pred=0.2, phi_md=1e9))
    assert out.kind == "model"
    assert out.label == int(np.argmax(m.forward(x)))


def test_pseudo_label_rep_branch():
    m = net()
    # centroids around the reachable tanh cube: latent is closest to class 0
    z = m.latent(np.array([0.5, -0.5]))
    stats = identity_stats([z, z + 100.0, z - 100.0])
    out = pseudo_label(m, stats, np.array([0.5, -0.5]),
                       GateThresholds(phi_pred=0.0, phi_md=1.0))
    assert out == PseudoLabelOutcome("rep", 0)


def test_pseudo_label_abstain_branch():
    m = net()
    z = m.latent(np.array([0.5, -0.5]))
    stats = identity_stats([z, z])          # tie -> zero margin
    out = pseudo_label(m, stats, np.array([0.5, -0.5]),
                       GateThresholds(phi_pred=0.0, phi_md=0.5))
    assert out.kind == "abstain"
    assert out.label is None


# -- adaptation step --------------------------------------------------------------------

def test_adapt_step_rejects_abstain_and_freezes_lower_layers():
    m = net()
    with pytest.raises(ValidationError):
        adapt_step(m, np.zeros(2), PseudoLabelOutcome("abstain"), 0.1)
    checksum = m.frozen_checksum()
    head_before = m.weights[-1].copy()
    adapt_step(m, np.array([0.3, 0.7]), PseudoLabelOutcome("model", 1), 0.1)
    assert m.frozen_checksum() == checksum
    assert not np.array_equal(m.weights[-1], head_before)


def test_adapt_step_reduces_pseudo_label_loss():
    m = net()
    x = np.array([0.3, 0.7])
    before = -np.log(m.forward(x)[1])
    for _ in range(5):
        adapt_step(m, x, PseudoLabelOutcome("model", 1), 0.1)
    assert -np.log(m.forward(x)[1]) < before


# -- detection ------------------------------------------------------------------------------

def test_detect_requires_all_three_conditions():
    m = net()
    x = np.array([0.2, 0.1])
    z = m.latent(x)
    near = identity_stats([z, z + 50.0, z - 50.0])
    far_tied = identity_stats([z + 50.0, z - 50.0, z + np.roll(z * 0 + 50.0, 1)])
    easy = DetectThresholds(psi_pred=0.0, psi_md=0.0, psi_dmd=1e9)

    # all three hold: entropy floor 0, far centroids, huge margin ceiling
    far = identity_stats([z + 50.0, z + 50.5, z + 51.0])
    assert detect_and_predict(m, far, x, easy).kind == "unseen"
    # break the MD-floor condition
    assert detect_and_predict(m, near, x, easy).kind == "seen"
    # break the margin condition
    assert detect_and_predict(
        m, far, x, DetectThresholds(psi_pred=0.0, psi_md=0.0, psi_dmd=0.0)).kind == "seen"
    # break the entropy condition
    assert detect_and_predict(
        m, far, x, DetectThresholds(psi_pred=1e9, psi_md=0.0, psi_dmd=1e9)).kind == "seen"
    assert detect_and_predict(m, near, x, easy).label == int(np.argmax(m.forward(x)))


def test_predict_batch_matches_scalar_path():
    m = net()
    stats = identity_stats([[0.4, 0.0, 0.0, 0.0], [0.0, 0.4, 0.0, 0.0],
                            [0.0, 0.0, 0.4, 0.0]])
    det = DetectThresholds(psi_pred=0.9, psi_md=0.5, psi_dmd=2.0)
    X = np.random.default_rng(4).normal(size=(25, 2))
    batch = predict_batch(m, stats, X, det)
    for x, p in zip(X, batch):
        assert p == detect_and_predict(m, stats, x, det)


def test_unseen_prediction_uses_sentinel():
    m = net()
    z = m.latent(np.array([0.0, 0.0]))
    far = identity_stats([z + 50.0, z + 50.5, z + 51.0])
    p = detect_and_predict(m, far, np.array([0.0, 0.0]),
                           DetectThresholds(psi_pred=0.0, psi_md=0.0, psi_dmd=1e9))
    assert p.kind == "unseen" and p.label == UNSEEN


# -- run_timestep -----------------------------------------------------------------------------

def test_run_timestep_closed_gate_leaves_model_untouched():
    m = net()
    before = [w.copy() for w in m.weights]
    stats = identity_stats([[0.0] * 4, [1.0] * 4, [2.0] * 4])
    X = np.random.default_rng(1).normal(size=(10, 2))
    gates = GateThresholds(phi_cos=-1.0)   # sim < -1 never holds
    _, preds, log = run_timestep(m, stats, X, X, gates, DetectThresholds(), 0.1)
    assert log["n_gated"] == 0
    assert len(preds) == 10
    for w, wb in zip(m.weights, before):
        np.testing.assert_array_equal(w, wb)


def test_run_timestep_counters_are_consistent():
    m = net()
    z = m.latent(np.array([0.0, 0.0]))
    stats = identity_stats([z, z + 3.0, z - 3.0])
    X = np.random.default_rng(2).normal(scale=0.5, size=(20, 2))
    gates = GateThresholds(phi_cos=1.0, phi_ent=0.0, phi_pred=0.05, phi_md=0.5)
    _, preds, log = run_timestep(m, stats, X, X + 5.0, gates, DetectThresholds(), 0.01)
    assert log["n_gated"] == (log["n_model_labels"] + log["n_rep_labels"]
                              + log["n_abstain"])
    assert log["n_gated"] == 20  # phi_ent = 0 gates every sample
    assert log["n_unseen_flagged"] == sum(p.kind == "unseen" for p in preds)
    assert m.frozen_checksum() == net().frozen_checksum()


def test_run_timestep_inner_passes_repeat_the_sweep():
    def run(passes):
        m = net()
        z = m.latent(np.array([0.0, 0.0]))
        stats = identity_stats([z, z + 3.0, z - 3.0])
        X = np.random.default_rng(3).normal(scale=0.5, size=(15, 2))
        gates = GateThresholds(phi_cos=1.0, phi_ent=0.0, phi_pred=0.05, phi_md=0.5)
        return run_timestep(m, stats, X, X + 5.0, gates, DetectThresholds(),
                            0.01, inner_passes=passes)[2]
    assert run(2)["n_gated"] == 2 * run(1)["n_gated"]
