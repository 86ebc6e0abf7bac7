"""Central finite-difference verification of every analytic gradient used by
the training losses."""

from __future__ import annotations

import numpy as np

from .model import DenseNet, cross_entropy
from .pretrain import pretrain_loss, pretrain_pair_gradients

FD_STEP = 1e-5
REL_TOL = 1e-4


def numeric_gradients(model, loss_fn, step=FD_STEP):
    """Central finite differences of loss_fn(model) w.r.t. every parameter."""
    gw = [np.zeros_like(w) for w in model.weights]
    gb = [np.zeros_like(b) for b in model.biases]
    for k in range(model.n_layers):
        for arr, out in ((model.weights[k], gw[k]), (model.biases[k], gb[k])):
            flat = arr.ravel()
            gflat = out.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                hi = loss_fn(model)
                flat[i] = orig - step
                lo = loss_fn(model)
                flat[i] = orig
                gflat[i] = (hi - lo) / (2.0 * step)
    return gw, gb


def max_relative_error(analytic, numeric, floor=1e-4):
    """Worst-case |a - n| / max(|a|, |n|, floor) over all parameters."""
    worst = 0.0
    for a_list, n_list in zip(analytic, numeric):
        for a, n in zip(a_list, n_list):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def _random_case(rng):
    sizes = [int(rng.integers(2, 5)), int(rng.integers(3, 7)),
             int(rng.integers(3, 7)), int(rng.integers(2, 5))]
    model = DenseNet(sizes, latent_index=2, rng=rng)
    x_i = rng.normal(size=sizes[0])
    x_j = rng.normal(size=sizes[0])
    y_i = int(rng.integers(sizes[-1]))
    y_j = int(rng.integers(sizes[-1]))
    return model, x_i, x_j, y_i, y_j


def run_suite(n_nets=20, seed=0):
    """Gradient checks on random small networks. Returns a list of rows
    (net, loss_name, max_rel_err); every entry should sit below REL_TOL."""
    rng = np.random.default_rng(seed)
    rows = []
    for n in range(n_nets):
        model, x_i, x_j, y_i, y_j = _random_case(rng)
        lam = float(rng.uniform(0.1, 0.9))
        margin = 10.0

        # cross-entropy alone
        _, grads = model.ce_gradients(x_i, y_i)
        num = numeric_gradients(model, lambda m: cross_entropy(m.forward(x_i), y_i))
        rows.append((n, "cross_entropy", max_relative_error(grads, num)))

        # same-class contrastive pull (also the simplified refinement loss)
        _, grads, _ = pretrain_pair_gradients(model, x_i, x_j, 0, 0, 0.0, margin)
        num = numeric_gradients(
            model, lambda m: pretrain_loss(m, x_i, x_j, 0, 0, 0.0, margin))
        rows.append((n, "contrastive_same", max_relative_error(grads, num)))

        # different-class hinge (margin 10 keeps the hinge active for tanh latents)
        _, grads, _ = pretrain_pair_gradients(model, x_i, x_j, 0, 1, 0.0, margin)
        num = numeric_gradients(
            model, lambda m: pretrain_loss(m, x_i, x_j, 0, 1, 0.0, margin))
        rows.append((n, "contrastive_diff", max_relative_error(grads, num)))

        # full pre-training pair loss
        _, grads, _ = pretrain_pair_gradients(model, x_i, x_j, y_i, y_j, lam, margin)
        num = numeric_gradients(
            model, lambda m: pretrain_loss(m, x_i, x_j, y_i, y_j, lam, margin))
        rows.append((n, "pretrain_pair", max_relative_error(grads, num)))

        # refinement pair: same class, full lambda mix
        _, grads, _ = pretrain_pair_gradients(model, x_i, x_j, y_i, y_i, lam, margin)
        num = numeric_gradients(
            model, lambda m: pretrain_loss(m, x_i, x_j, y_i, y_i, lam, margin))
        rows.append((n, "refine_pair", max_relative_error(grads, num)))
    return rows
