"""Small dense classifier with hand-written gradients.

Layers are affine + tanh, except the last layer which feeds a softmax head.
A designated middle layer provides the latent representation used by the
contrastive losses and the Mahalanobis statistics. Parameters below the
frozen boundary stay untouched by learnable-only updates.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ConfigurationError, InvalidLabelError

PROB_CLAMP = 1e-12


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def entropy(q):
    """Shannon entropy in nats, with 0*log(0) := 0."""
    q = np.asarray(q, dtype=np.float64)
    ql = np.clip(q, PROB_CLAMP, None)
    return float(-np.sum(np.where(q > 0.0, q * np.log(ql), 0.0), axis=-1))


def entropy_batch(q):
    q = np.asarray(q, dtype=np.float64)
    ql = np.clip(q, PROB_CLAMP, None)
    return -np.sum(np.where(q > 0.0, q * np.log(ql), 0.0), axis=-1)


def cross_entropy(q, y):
    """-log q[y] with the probability clamped at 1e-12."""
    q = np.asarray(q, dtype=np.float64)
    if not (0 <= int(y) < q.shape[-1]):
        raise InvalidLabelError(f"label {y} outside [0, {q.shape[-1]})")
    return float(-np.log(max(q[int(y)], PROB_CLAMP)))


class DenseNet:
    """Feed-forward net: tanh hidden layers, softmax output.

    layer_sizes = [d_in, h_1, ..., h_{L-1}, n_classes]; there are L affine
    layers, indexed 1..L. latent_index is the (1-based) layer whose
    post-activation output is the latent representation; it must be a strict
    middle layer. frozen_boundary: layers with index <= frozen_boundary are
    frozen under learnable-only updates (default: the latent layer).
    """

    def __init__(self, layer_sizes, latent_index, frozen_boundary=None, rng=None):
        layer_sizes = [int(s) for s in layer_sizes]
        L = len(layer_sizes) - 1
        if L < 3:
            raise ConfigurationError("need at least 3 layers so a strict middle layer exists")
        if not (1 < latent_index < L):
            raise ConfigurationError(f"latent_index must satisfy 1 < {latent_index} < {L}")
        if frozen_boundary is None:
            frozen_boundary = latent_index
        if not (0 <= frozen_boundary < L):
            raise ConfigurationError(f"frozen_boundary {frozen_boundary} outside [0, {L})")
        self.layer_sizes = layer_sizes
        self.latent_index = int(latent_index)
        self.frozen_boundary = int(frozen_boundary)
        if rng is None:
            rng = np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            scale = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.normal(scale=scale, size=(fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))

    # -- basic properties ---------------------------------------------------

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def output_dim(self):
        return self.layer_sizes[-1]

    @property
    def latent_dim(self):
        return self.layer_sizes[self.latent_index]

    def copy(self):
        m = DenseNet.__new__(DenseNet)
        m.layer_sizes = list(self.layer_sizes)
        m.latent_index = self.latent_index
        m.frozen_boundary = self.frozen_boundary
        m.weights = [w.copy() for w in self.weights]
        m.biases = [b.copy() for b in self.biases]
        return m

    @classmethod
    def zeros(cls, layer_sizes, latent_index, frozen_boundary=None):
        m = cls(layer_sizes, latent_index, frozen_boundary)
        for w in m.weights:
            w[...] = 0.0
        return m

    def frozen_checksum(self):
        """SHA-256 over the byte content of all frozen-layer parameters."""
        h = hashlib.sha256()
        for k in range(self.frozen_boundary):
            h.update(np.ascontiguousarray(self.weights[k]).tobytes())
            h.update(np.ascontiguousarray(self.biases[k]).tobytes())
        return h.hexdigest()

    # -- forward passes -----------------------------------------------------

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise ConfigurationError(
                f"input width {x.shape[-1]} does not match model input {self.input_dim}")
        return x

    def activations(self, x):
        """All post-activation layer outputs [a_1, ..., a_L]; a_L are probabilities."""
        a = self._check_input(x)
        acts = []
        for k in range(self.n_layers):
            z = a @ self.weights[k].T + self.biases[k]
            a = softmax(z) if k == self.n_layers - 1 else np.tanh(z)
            acts.append(a)
        return acts

    def forward(self, x):
        return self.activations(x)[-1]

    def forward_batch(self, X):
        return self.activations(np.atleast_2d(X))[-1]

    def latent(self, x):
        a = self._check_input(x)
        for k in range(self.latent_index):
            a = np.tanh(a @ self.weights[k].T + self.biases[k])
        return a

    def latent_batch(self, X):
        return self.latent(np.atleast_2d(X))

    def head_forward(self, z):
        """Apply the layers above the latent layer to a latent vector."""
        a = np.asarray(z, dtype=np.float64)
        for k in range(self.latent_index, self.n_layers):
            h = a @ self.weights[k].T + self.biases[k]
            a = softmax(h) if k == self.n_layers - 1 else np.tanh(h)
        return a

    # -- gradients ----------------------------------------------------------

    def zero_grads(self):
        return ([np.zeros_like(w) for w in self.weights],
                [np.zeros_like(b) for b in self.biases])

    def _backprop_from(self, x, acts, start, delta, gw, gb):
        """Accumulate gradients backwards from layer `start` (1-based), where
        `delta` is dLoss/dz_start (pre-activation gradient at that layer)."""
        for k in range(start - 1, -1, -1):
            a_prev = acts[k - 1] if k > 0 else x
            gw[k] += np.outer(delta, a_prev)
            gb[k] += delta
            if k > 0:
                da = self.weights[k].T @ delta
                delta = da * (1.0 - acts[k - 1] ** 2)

    def ce_gradients(self, x, y, grads=None):
        """Cross-entropy loss and its gradients for one labelled sample."""
        x = self._check_input(x)
        if not (0 <= int(y) < self.output_dim):
            raise InvalidLabelError(f"label {y} outside [0, {self.output_dim})")
        acts = self.activations(x)
        q = acts[-1]
        loss = cross_entropy(q, y)
        gw, gb = grads if grads is not None else self.zero_grads()
        delta = q.copy()
        delta[int(y)] -= 1.0
        self._backprop_from(x, acts, self.n_layers, delta, gw, gb)
        return loss, (gw, gb)

    def latent_gradients(self, x, g_latent, grads=None):
        """Backprop a latent-space gradient g = dLoss/da_{latent} into parameters."""
        x = self._check_input(x)
        acts = self.activations(x)
        gw, gb = grads if grads is not None else self.zero_grads()
        a_lat = acts[self.latent_index - 1]
        delta = np.asarray(g_latent) * (1.0 - a_lat ** 2)
        self._backprop_from(x, acts, self.latent_index, delta, gw, gb)
        return gw, gb


def apply_gradient(model, grads, eta, scope="all"):
    """Plain gradient step theta <- theta - eta * grad.

    scope="all" touches every layer; scope="learnable" skips layers at or
    below the frozen boundary, leaving their arrays bit-identical.
    """
    gw, gb = grads
    if len(gw) != model.n_layers or len(gb) != model.n_layers:
        raise ConfigurationError("gradient list length does not match layer count")
    start = 0 if scope == "all" else model.frozen_boundary
    if scope not in ("all", "learnable"):
        raise ConfigurationError(f"unknown scope {scope!r}")
    for k in range(start, model.n_layers):
        if gw[k].shape != model.weights[k].shape or gb[k].shape != model.biases[k].shape:
            raise ConfigurationError(f"gradient shape mismatch at layer {k + 1}")
        model.weights[k] -= eta * gw[k]
        model.biases[k] -= eta * gb[k]
    return model


class SGD:
    def __init__(self, eta):
        self.eta = eta

    def step(self, model, grads, scope="all"):
        apply_gradient(model, grads, self.eta, scope=scope)


class Adam:
    """Adam with a global step counter; moments are kept for every layer but
    only in-scope layers are updated on a given step."""

    def __init__(self, eta, beta1=0.9, beta2=0.999, eps=1e-8):
        self.eta = eta
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = None
        self._v = None

    def _init_state(self, model):
        self._m = ([np.zeros_like(w) for w in model.weights],
                   [np.zeros_like(b) for b in model.biases])
        self._v = ([np.zeros_like(w) for w in model.weights],
                   [np.zeros_like(b) for b in model.biases])

    def step(self, model, grads, scope="all"):
        if self._m is None:
            self._init_state(model)
        if scope not in ("all", "learnable"):
            raise ConfigurationError(f"unknown scope {scope!r}")
        gw, gb = grads
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        start = 0 if scope == "all" else model.frozen_boundary
        for k in range(start, model.n_layers):
            for params, g, m, v in (
                (model.weights, gw[k], self._m[0][k], self._v[0][k]),
                (model.biases, gb[k], self._m[1][k], self._v[1][k]),
            ):
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                params[k] -= self.eta * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


def make_optimizer(name, eta):
    if name == "adam":
        return Adam(eta)
    if name == "sgd":
        return SGD(eta)
    raise ConfigurationError(f"unknown optimizer {name!r}")
