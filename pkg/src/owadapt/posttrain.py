"""Self-supervised post-training: conditional adaptation gates, three-branch
pseudo-labeling, learnable-parameter updates, and inference with
three-condition unseen detection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, ValidationError
from .model import apply_gradient, entropy, entropy_batch
from .stats import md_batch, md_margin, md_set

UNSEEN = -1  # prediction bucket for samples flagged as not belonging to any seen class


@dataclass
class GateThresholds:
    phi_ent: float = 0.5    # per-sample entropy gate for adaptation
    phi_cos: float = 0.5    # batch-level similarity gate (adapt when sim is below)
    phi_pred: float = 0.1   # entropy ceiling for model-prediction pseudo-labels
    phi_md: float = 3.0     # MD-margin floor for representation pseudo-labels

    def __post_init__(self):
        if min(self.phi_ent, self.phi_pred, self.phi_md) < 0:
            raise ConfigurationError("gate thresholds must be nonnegative")
        if not -1.0 <= self.phi_cos <= 1.0:
            raise ConfigurationError("phi_cos must lie in [-1, 1]")


@dataclass
class DetectThresholds:
    psi_pred: float = 0.5   # entropy floor
    psi_md: float = 8.0     # min-MD floor
    psi_dmd: float = 3.0    # MD-margin ceiling

    def __post_init__(self):
        if min(self.psi_pred, self.psi_md, self.psi_dmd) < 0:
            raise ConfigurationError("detection thresholds must be nonnegative")


@dataclass(frozen=True)
class PseudoLabelOutcome:
    kind: str               # "model" | "rep" | "abstain"
    label: int = None


@dataclass(frozen=True)
class Prediction:
    kind: str               # "seen" | "unseen"
    label: int              # class id, or UNSEEN


def mean_prediction(model, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValidationError("mean prediction of an empty batch")
    return model.forward_batch(X).mean(axis=0)


def cosine_similarity(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity of a zero vector")
    return float(a @ b / (na * nb))


def should_adapt(h_values, sim, gates):
    """Per-sample adaptation flags: entropy at or above the gate AND the
    batch-level similarity strictly below its gate."""
    h = np.asarray(h_values, dtype=np.float64)
    if sim >= gates.phi_cos:
        return np.zeros(h.shape, dtype=bool)
    return h >= gates.phi_ent


def pseudo_label(model, stats, x, gates):
    """Three-branch rule: confident model prediction; else the nearest-centroid
    class when the MD margin is wide enough; else abstain."""
    q = model.forward(x)
    h = entropy(q)
    if h < gates.phi_pred:
        return PseudoLabelOutcome("model", int(np.argmax(q)))
    m = md_set(stats, model.latent(x))
    if md_margin(m) >= gates.phi_md:
        return PseudoLabelOutcome("rep", min(m, key=m.get))
    return PseudoLabelOutcome("abstain")


def adapt_step(model, x, outcome, eta):
    """One cross-entropy step against the pseudo-label, learnable layers only."""
    if outcome.kind == "abstain":
        raise ValidationError("adapt_step called with an abstained sample")
    _, grads = model.ce_gradients(x, outcome.label)
    apply_gradient(model, grads, eta, scope="learnable")
    return model


def detect_and_predict(model, stats, x, det):
    """Unseen iff entropy, min-MD, and MD-margin all indicate an outlier;
    otherwise the argmax class."""
    q = model.forward(x)
    h = entropy(q)
    m = md_set(stats, model.latent(x))
    if h > det.psi_pred and min(m.values()) > det.psi_md and md_margin(m) < det.psi_dmd:
        return Prediction("unseen", UNSEEN)
    return Prediction("seen", int(np.argmax(q)))


def predict_batch(model, stats, X, det):
    """Vectorized detect_and_predict over a feature matrix."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    q = model.forward_batch(X)
    h = entropy_batch(q)
    D = md_batch(stats, model.latent_batch(X))
    smallest2 = np.partition(D, 1, axis=1)[:, :2]
    min_md = smallest2[:, 0]
    margin = smallest2[:, 1] - smallest2[:, 0]
    unseen = (h > det.psi_pred) & (min_md > det.psi_md) & (margin < det.psi_dmd)
    labels = np.argmax(q, axis=1)
    return [Prediction("unseen", UNSEEN) if u else Prediction("seen", int(l))
            for u, l in zip(unseen, labels)]


def run_timestep(model, stats, X_t, X_prev, gates, det, eta, inner_passes=1):
    """One post-training timestep: compute the batch similarity once, run the
    gated pseudo-label/update pass (inner_passes times), then predict every
    sample with the updated model.

    Returns (model, predictions, log) where log carries the gate counters.
    """
    X_t = np.atleast_2d(np.asarray(X_t, dtype=np.float64))
    sim = cosine_similarity(mean_prediction(model, X_t), mean_prediction(model, X_prev))
    counters = {"n_gated": 0, "n_model_labels": 0, "n_rep_labels": 0, "n_abstain": 0}
    gate_open = sim < gates.phi_cos
    if gate_open:
        for _ in range(inner_passes):
            for i in range(X_t.shape[0]):
                x = X_t[i]
                if entropy(model.forward(x)) < gates.phi_ent:
                    continue
                counters["n_gated"] += 1
                outcome = pseudo_label(model, stats, x, gates)
                if outcome.kind == "abstain":
                    counters["n_abstain"] += 1
                    continue
                counters[f"n_{outcome.kind}_labels"] += 1
                adapt_step(model, x, outcome, eta)
    predictions = predict_batch(model, stats, X_t, det)
    log = {"sim": sim, **counters,
           "n_unseen_flagged": sum(p.kind == "unseen" for p in predictions)}
    return model, predictions, log
