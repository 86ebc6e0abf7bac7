"""Synthetic open-world data: long-tailed training set and a timestep stream
with label shift, additive Gaussian covariate corruption, and an unseen class
injected through the terminal label distribution."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ValidationError

SCHEDULE_KINDS = ("lin", "squ", "sin", "ber")


def rng_for(seed, *tags):
    """Deterministic generator keyed by (seed, tags); string tags are CRC-hashed
    so adding a new stream never perturbs existing ones."""
    ints = [int(seed)]
    for tag in tags:
        ints.append(zlib.crc32(tag.encode()) if isinstance(tag, str) else int(tag))
    return np.random.default_rng(np.random.SeedSequence(ints))


class ShiftSchedule:
    """Generator of the shift weight alpha^t in [0, 1].

    lin: t/T. squ: starts at 0, toggles every ceil(sqrt(T)/2) steps.
    sin: sin(t*pi/sqrt(T)) clamped to [0, 1]. ber: alpha_0 = 0, then keeps the
    previous value with probability 1/sqrt(T), else flips to 1 - previous
    (flip_is_keep_complement=False instead flips WITH probability 1/sqrt(T)).
    """

    def __init__(self, kind, T, seed=0, flip_is_keep_complement=True):
        kind = kind.lower()
        if kind not in SCHEDULE_KINDS:
            raise ConfigurationError(f"unknown schedule kind {kind!r}")
        if T < 1:
            raise ConfigurationError("T must be >= 1")
        self.kind = kind
        self.T = int(T)
        self.seed = int(seed)
        self.flip_is_keep_complement = flip_is_keep_complement
        if kind == "ber":
            rng = rng_for(self.seed, "ber-schedule")
            keep_p = 1.0 / np.sqrt(self.T)
            seq = np.empty(self.T + 1)
            seq[0] = 0.0
            u = rng.random(self.T)
            for t in range(1, self.T + 1):
                if self.flip_is_keep_complement:
                    keep = u[t - 1] < keep_p
                else:
                    keep = u[t - 1] >= keep_p
                seq[t] = seq[t - 1] if keep else 1.0 - seq[t - 1]
            self._ber_seq = seq

    def alpha(self, t):
        if not 0 <= t <= self.T:
            raise ValidationError(f"timestep {t} outside [0, {self.T}]")
        if self.kind == "lin":
            return t / self.T
        if self.kind == "squ":
            interval = int(np.ceil(np.sqrt(self.T) / 2.0))
            return float((t // interval) % 2)
        if self.kind == "sin":
            return float(np.clip(np.sin(t * np.pi / np.sqrt(self.T)), 0.0, 1.0))
        return float(self._ber_seq[t])


def _check_simplex(w, name):
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValidationError(f"{name} is not a probability distribution")
    return w


def mixture_dist(omega0, omegaT, alpha, eq1_literal=False):
    """Label distribution at shift weight alpha.

    Default orientation: (1-alpha)*omega0 + alpha*omegaT, so alpha=0 gives the
    initial distribution and alpha=1 the terminal one. eq1_literal swaps the
    weights (alpha on omega0).
    """
    w0 = _check_simplex(omega0, "omega0")
    wT = _check_simplex(omegaT, "omegaT")
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha {alpha} outside [0, 1]")
    if w0.shape != wT.shape:
        raise ValidationError("omega0 and omegaT have different lengths")
    if eq1_literal:
        return alpha * w0 + (1.0 - alpha) * wT
    return (1.0 - alpha) * w0 + alpha * wT


def make_longtailed(rho, n_classes, n_max):
    """Exponential long-tail profile n_c = round(n_max * rho^(-rank/(K-1))).

    Returns (distribution over the K classes, integer per-class counts).
    """
    if rho < 1:
        raise ValidationError("imbalance factor rho must be >= 1")
    if n_classes < 2:
        raise ValidationError("need at least 2 classes")
    ranks = np.arange(n_classes)
    counts = np.rint(n_max * rho ** (-ranks / (n_classes - 1))).astype(np.int64)
    if counts.min() < 2:
        raise ValidationError(
            f"n_max={n_max} leaves the smallest class with {counts.min()} sample(s)")
    return counts / counts.sum(), counts


@dataclass
class TimestepBatch:
    """Unlabeled samples for one timestep. Ground truth is retained only for
    scoring and is reachable only through truth()."""

    t: int
    features: np.ndarray
    _truth_labels: np.ndarray = field(repr=False)
    _truth_is_unseen: np.ndarray = field(repr=False)

    def __len__(self):
        return self.features.shape[0]

    def truth(self):
        """(labels, is_unseen) — scoring only, never passed to the learner."""
        return self._truth_labels, self._truth_is_unseen


@dataclass
class WorldSpec:
    dim: int = 2
    n_classes: int = 5
    n_seen: int = 4
    radius: float = 3.0           # class means sit on a circle of this radius
    rho: float = 10.0
    T: int = 100
    n_per_step: int = 100
    n_max: int = 1000             # largest class size in the pre-training set
    sigma_max: float = 1.5        # corruption severity at alpha = 1
    outlier_frac: float = 0.15    # share of corrupted pre-training measurements
    outlier_scale: float = 5.0    # corrupted samples sit this many times further out
    eq1_literal: bool = False
    means: np.ndarray = None      # (n_classes, dim); default: circle layout
    # per-class isotropic std; unequal spreads make the Bayes boundary move as
    # corruption noise grows, so the stream carries trackable covariate shift
    class_std: tuple = (0.6, 1.2, 0.8, 1.4, 1.0)
    covs: np.ndarray = None       # (n_classes, dim, dim); default: diag(class_std^2)

    def __post_init__(self):
        if not 2 <= self.n_seen < self.n_classes:
            raise ConfigurationError("need 2 <= n_seen < n_classes")
        if self.sigma_max < 0 or self.rho < 1:
            raise ConfigurationError("sigma_max must be >= 0 and rho >= 1")
        if not 0.0 <= self.outlier_frac < 1.0 or self.outlier_scale < 1.0:
            raise ConfigurationError("need 0 <= outlier_frac < 1 and outlier_scale >= 1")
        if self.means is None:
            angles = 2.0 * np.pi * np.arange(self.n_classes) / self.n_classes
            means = np.zeros((self.n_classes, self.dim))
            means[:, 0] = self.radius * np.cos(angles)
            means[:, 1 % self.dim] = self.radius * np.sin(angles)
            self.means = means
        else:
            self.means = np.asarray(self.means, dtype=np.float64)
        if self.covs is None:
            if self.class_std is None:
                self.covs = np.tile(np.eye(self.dim), (self.n_classes, 1, 1))
            else:
                stds = np.asarray(self.class_std, dtype=np.float64)
                if stds.shape != (self.n_classes,) or np.any(stds <= 0):
                    raise ConfigurationError(
                        f"class_std must be {self.n_classes} positive values "
                        "(or None for unit covariance)")
                self.covs = np.stack([np.eye(self.dim) * s * s for s in stds])
        else:
            self.covs = np.asarray(self.covs, dtype=np.float64)
        if self.means.shape != (self.n_classes, self.dim):
            raise ConfigurationError("means must have shape (n_classes, dim)")
        if self.covs.shape != (self.n_classes, self.dim, self.dim):
            raise ConfigurationError("covs must have shape (n_classes, dim, dim)")

    @property
    def seen_classes(self):
        return list(range(self.n_seen))

    @property
    def unseen_classes(self):
        return list(range(self.n_seen, self.n_classes))

    def omega0(self):
        """Initial distribution: long-tailed over seen classes, 0 on unseen."""
        dist, _ = make_longtailed(self.rho, self.n_seen, self.n_max)
        w = np.zeros(self.n_classes)
        w[: self.n_seen] = dist
        return w

    def omegaT(self):
        """Terminal distribution: the seen-class long-tail reversed (minority
        classes become dominant) and each unseen class at the minority share."""
        dist, _ = make_longtailed(self.rho, self.n_seen, self.n_max)
        w = np.zeros(self.n_classes)
        w[: self.n_seen] = dist[::-1]
        w[self.n_seen:] = dist.min()
        return w / w.sum()

    def sigma_noise(self, alpha):
        return alpha * self.sigma_max


def sample_class_features(world, labels, rng):
    X = np.empty((len(labels), world.dim))
    for c in np.unique(labels):
        mask = labels == c
        X[mask] = rng.multivariate_normal(world.means[c], world.covs[c], size=int(mask.sum()))
    return X


def emit_batch(world, schedule, t, rng):
    """Draw one timestep batch: labels from the mixed distribution, features
    from the class generators plus corruption noise of std alpha*sigma_max."""
    if not 1 <= t <= world.T:
        raise ValidationError(f"timestep {t} outside [1, {world.T}]")
    alpha = schedule.alpha(t)
    omega = mixture_dist(world.omega0(), world.omegaT(), alpha, world.eq1_literal)
    labels = rng.choice(world.n_classes, size=world.n_per_step, p=omega)
    X = sample_class_features(world, labels, rng)
    sigma = world.sigma_noise(alpha)
    if sigma > 0:
        X = X + rng.normal(scale=sigma, size=X.shape)
    return TimestepBatch(
        t=t, features=X,
        _truth_labels=labels,
        _truth_is_unseen=labels >= world.n_seen,
    )


def make_pretrain_set(world, rng):
    """Labeled pre-training set: long-tailed counts over seen classes, no
    drift corruption, no unseen classes. A fraction outlier_frac of the
    measurements is corrupted: its deviation from the class mean is stretched
    by outlier_scale (labels stay correct). Returns (X, y)."""
    _, counts = make_longtailed(world.rho, world.n_seen, world.n_max)
    y = np.repeat(np.arange(world.n_seen), counts)
    X = sample_class_features(world, y, rng)
    if world.outlier_frac > 0.0:
        mask = rng.random(len(y)) < world.outlier_frac
        if np.any(mask):
            mu = world.means[y[mask]]
            X[mask] = mu + world.outlier_scale * (X[mask] - mu)
    return X, y
