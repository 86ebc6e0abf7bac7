"""Imbalance-aware contrastive pre-training with borderline refinement.

Each round runs one pass of pairwise contrastive training (second pair
member drawn from the inverse-frequency class distribution) and, after a
warm-up, one refinement pass that pulls high-MD class members toward the
class anchor.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, InsufficientDataError
from .model import DenseNet, cross_entropy, make_optimizer
from .stats import fit_stats, md_batch, select_anchor, select_borderline


@dataclass
class PretrainConfig:
    hidden: tuple = (16, 8)
    latent_index: int = 2
    lam: float = 0.25            # balance between classification and representation loss
    margin: float = 10.0         # minimum latent separation for different-class pairs
    eta: float = 1e-3
    epochs: int = 4
    warmup_epochs: int = 3       # refinement runs once, after the last full pass
    phi_border: float = 2.0
    refine: bool = True
    refine_eta: float = 3e-4     # Step II uses its own plain-SGD step size
    optimizer: str = "adam"

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0,1], got {self.lam}")
        if self.margin < 0 or self.phi_border < 0:
            raise ValueError("margin and phi_border must be nonnegative")


@dataclass
class PretrainResult:
    model: DenseNet
    stats: object
    log: list = field(default_factory=list)   # per-epoch dict rows
    intra_class_md: float = float("nan")


def inverse_frequency_dist(omega0):
    """Normalized (1 - omega0) so minority classes get picked more often."""
    w = np.asarray(omega0, dtype=np.float64)
    if w.size < 2:
        raise DegenerateInputError("inverse-frequency distribution needs >= 2 classes")
    inv = 1.0 - w
    return inv / inv.sum()


def contrastive_loss(z_i, z_j, y_i, y_j, margin):
    """Same class: ||z_i - z_j||; different class: hinge max(0, margin - ||.||)."""
    d = float(np.linalg.norm(np.asarray(z_i, dtype=np.float64) - np.asarray(z_j, dtype=np.float64)))
    if int(y_i) == int(y_j):
        return d
    return max(0.0, margin - d)


def _contrastive_latent_grads(z_i, z_j, same, margin):
    """Latent-space gradients of the contrastive loss w.r.t. z_i and z_j.

    At the nondifferentiable points (coincident latents, hinge corner) the
    zero subgradient is used.
    """
    diff = z_i - z_j
    d = float(np.linalg.norm(diff))
    zero = np.zeros_like(diff)
    if same:
        if d == 0.0:
            return 0.0, zero, zero
        u = diff / d
        return d, u, -u
    if d >= margin or d == 0.0:
        return max(0.0, margin - d), zero, zero
    u = diff / d
    return margin - d, -u, u


def pretrain_loss(model, x_i, x_j, y_i, y_j, lam, margin):
    """lam*(CE_i + CE_j) + (1-lam)*contrastive on the latent layer."""
    ce = cross_entropy(model.forward(x_i), y_i) + cross_entropy(model.forward(x_j), y_j)
    rep = contrastive_loss(model.latent(x_i), model.latent(x_j), y_i, y_j, margin)
    return lam * ce + (1.0 - lam) * rep


def pretrain_pair_gradients(model, x_i, x_j, y_i, y_j, lam, margin):
    """Loss value, parameter gradients, and the (ce, rep) parts for one pair."""
    gw, gb = model.zero_grads()
    ce_i, _ = model.ce_gradients(x_i, y_i, grads=(gw, gb))
    ce_j, _ = model.ce_gradients(x_j, y_j, grads=(gw, gb))
    for g in gw[:model.n_layers]:
        g *= lam
    for g in gb[:model.n_layers]:
        g *= lam
    z_i = model.latent(x_i)
    z_j = model.latent(x_j)
    rep, g_i, g_j = _contrastive_latent_grads(z_i, z_j, int(y_i) == int(y_j), margin)
    w = 1.0 - lam
    if w != 0.0:
        model.latent_gradients(x_i, w * g_i, grads=(gw, gb))
        model.latent_gradients(x_j, w * g_j, grads=(gw, gb))
    loss = lam * (ce_i + ce_j) + w * rep
    return loss, (gw, gb), (ce_i + ce_j, rep)


def _class_indices(y):
    return {int(c): np.nonzero(y == c)[0] for c in np.unique(y)}


def draw_pair_partner(classes, by_class, inv, rng):
    """Second pair member: class from the inverse-frequency distribution,
    member uniform within the class. Returns a dataset index."""
    c_j = classes[rng.choice(len(classes), p=inv)]
    return int(rng.choice(by_class[c_j]))


def step1_epoch(model, X, y, omega0, config, optimizer, rng):
    """One pass of imbalance-aware pairing: i sequential over the dataset,
    j's class from the inverse-frequency distribution, member uniform."""
    by_class = _class_indices(y)
    classes = sorted(by_class)
    for c in classes:
        if len(by_class[c]) == 0:
            raise InsufficientDataError(f"class {c} has no samples")
    inv = inverse_frequency_dist(omega0)
    sum_pre = sum_ce = sum_rep = 0.0
    n = X.shape[0]
    for i in range(n):
        j = draw_pair_partner(classes, by_class, inv, rng)
        loss, grads, (ce, rep) = pretrain_pair_gradients(
            model, X[i], X[j], y[i], y[j], config.lam, config.margin)
        optimizer.step(model, grads, scope="all")
        sum_pre += loss
        sum_ce += ce
        sum_rep += rep
    return {"mean_L_pre": sum_pre / n, "mean_L_class": sum_ce / n, "mean_L_rep": sum_rep / n}


def step2_refine(model, X, y, stats, config, optimizer):
    """Pull each class's borderline samples toward its anchor (same-class
    pair, so the representation term is the plain latent distance)."""
    by_class = _class_indices(y)
    n_borderline = 0
    for c in sorted(by_class):
        idx = by_class[c]
        latents = model.latent_batch(X[idx])
        a = select_anchor(stats, latents, c)
        border = select_borderline(stats, latents, c, config.phi_border)
        for b in border:
            if b == a:
                continue
            n_borderline += 1
            xa, xb = X[idx[a]], X[idx[b]]
            _, grads, _ = pretrain_pair_gradients(
                model, xa, xb, c, c, config.lam, config.margin)
            optimizer.step(model, grads, scope="all")
    return n_borderline


def mean_intraclass_md(model, X, y, stats):
    """Mean Mahalanobis distance of each sample's latent to its own class."""
    Z = model.latent_batch(X)
    D = md_batch(stats, Z)
    cols = {int(c): i for i, c in enumerate(stats.classes)}
    own = np.array([D[i, cols[int(c)]] for i, c in enumerate(y)])
    return float(own.mean())


def run_pretraining(X, y, config, rng, model=None):
    """Alternate contrastive training and borderline refinement.

    Returns the trained model, final class statistics, a per-epoch log, and
    the intra-class MD diagnostic (final latents measured against statistics
    fitted after the last contrastive pass, i.e. the geometry the final
    refinement acted on; using refitted statistics would self-normalize the
    quantity to ~sqrt(latent dim) regardless of training).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    classes, counts = np.unique(y, return_counts=True)
    omega0 = counts / counts.sum()
    if model is None:
        sizes = [X.shape[1], *config.hidden, len(classes)]
        model = DenseNet(sizes, config.latent_index, rng=rng)
    optimizer = make_optimizer(config.optimizer, config.eta)
    # refinement takes deliberately small plain-SGD steps: the adaptive
    # moments accumulated during Step I are far too aggressive for the
    # targeted anchor pulls and can drag unrelated regions of the latent map
    refine_opt = make_optimizer("sgd", config.refine_eta)
    log = []
    ref_stats = None
    for epoch in range(1, config.epochs + 1):
        row = {"epoch": epoch, "n_borderline": 0}
        row.update(step1_epoch(model, X, y, omega0, config, optimizer, rng))
        ref_stats = fit_stats(model.latent_batch(X), y)
        if config.refine and epoch > config.warmup_epochs:
            row["n_borderline"] = step2_refine(model, X, y, ref_stats, config, refine_opt)
        log.append(row)
    if ref_stats is None:
        ref_stats = fit_stats(model.latent_batch(X), y)
    intra = mean_intraclass_md(model, X, y, ref_stats)
    final_stats = fit_stats(model.latent_batch(X), y)
    return PretrainResult(model=model, stats=final_stats, log=log, intra_class_md=intra)


def write_pretrain_log(log, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "mean_L_pre", "mean_L_class",
                                           "mean_L_rep", "n_borderline"])
        w.writeheader()
        for row in log:
            w.writerow({k: row[k] for k in w.fieldnames})
