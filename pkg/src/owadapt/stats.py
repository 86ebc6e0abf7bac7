"""Class-conditional Gaussian statistics over latent vectors.

Per-class means and covariances back every Mahalanobis computation:
distance to centroids, the first-vs-second-closest margin, anchor
selection and borderline selection for the refinement step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, InvalidLabelError

# Relative ridge added to each covariance so tiny minority classes stay
# invertible: sigma_hat = sigma + gamma*I with gamma = SHRINKAGE * trace/dim.
SHRINKAGE = 1e-3


@dataclass
class ClassStats:
    classes: np.ndarray          # sorted class ids, shape (C,)
    means: np.ndarray            # (C, k)
    covs: np.ndarray             # (C, k, k), after shrinkage
    inv_covs: np.ndarray         # (C, k, k), cached inverses
    counts: np.ndarray           # (C,)
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {int(c): i for i, c in enumerate(self.classes)}

    @property
    def n_classes(self):
        return len(self.classes)

    @property
    def latent_dim(self):
        return self.means.shape[1]

    def class_row(self, c):
        try:
            return self._index[int(c)]
        except KeyError:
            raise InvalidLabelError(f"class {c} has no fitted statistics") from None


def fit_stats(latents, labels, shrinkage=SHRINKAGE):
    """Fit per-class mean and shrunk covariance from (latent, label) pairs.

    Every class must contribute at least 2 samples. Covariance is the
    unbiased sample estimate plus gamma*I, gamma = shrinkage * trace/dim.
    """
    Z = np.asarray(latents, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if Z.ndim != 2 or Z.shape[0] != y.shape[0]:
        raise InsufficientDataError("latents and labels must align as (n, k) and (n,)")
    classes = np.unique(y)
    k = Z.shape[1]
    means = np.empty((len(classes), k))
    covs = np.empty((len(classes), k, k))
    inv_covs = np.empty_like(covs)
    counts = np.empty(len(classes), dtype=np.int64)
    for i, c in enumerate(classes):
        zc = Z[y == c]
        if zc.shape[0] < 2:
            raise InsufficientDataError(f"class {int(c)} has {zc.shape[0]} sample(s); need >= 2")
        counts[i] = zc.shape[0]
        means[i] = zc.mean(axis=0)
        d = zc - means[i]
        cov = d.T @ d / (zc.shape[0] - 1)
        gamma = shrinkage * np.trace(cov) / k
        cov = cov + gamma * np.eye(k)
        covs[i] = cov
        inv_covs[i] = np.linalg.inv(cov)
    return ClassStats(classes=classes, means=means, covs=covs,
                      inv_covs=inv_covs, counts=counts)


def mahalanobis(stats, c, z):
    """sqrt((z - mu_c)^T Sigma_c^{-1} (z - mu_c))."""
    i = stats.class_row(c)
    d = np.asarray(z, dtype=np.float64) - stats.means[i]
    v = float(d @ stats.inv_covs[i] @ d)
    return float(np.sqrt(max(v, 0.0)))


def md_set(stats, z):
    """Ordered map class -> Mahalanobis distance, one entry per fitted class."""
    return {int(c): mahalanobis(stats, c, z) for c in stats.classes}


def md_batch(stats, Z):
    """Distance matrix (n, C): Mahalanobis distance of each row to each class."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    out = np.empty((Z.shape[0], stats.n_classes))
    for i in range(stats.n_classes):
        d = Z - stats.means[i]
        out[:, i] = np.einsum("nj,jk,nk->n", d, stats.inv_covs[i], d)
    return np.sqrt(np.clip(out, 0.0, None))


def md_margin(m):
    """Second-smallest minus smallest distance in an MD set (dict or array)."""
    values = np.asarray(list(m.values()) if isinstance(m, dict) else m, dtype=np.float64)
    if values.size < 2:
        raise InsufficientDataError("margin needs at least two class distances")
    smallest, second = np.partition(values, 1)[:2]
    return float(second - smallest)


def select_anchor(stats, class_latents, c):
    """Index of the class member closest (MD) to its own centroid; ties -> lowest index."""
    Z = np.atleast_2d(np.asarray(class_latents, dtype=np.float64))
    if Z.shape[0] == 0:
        raise InsufficientDataError(f"no latents supplied for class {c}")
    i = stats.class_row(c)
    d = Z - stats.means[i]
    dist2 = np.einsum("nj,jk,nk->n", d, stats.inv_covs[i], d)
    return int(np.argmin(dist2))


def select_borderline(stats, class_latents, c, phi_border):
    """Ascending indices of class members with MD strictly above phi_border."""
    Z = np.atleast_2d(np.asarray(class_latents, dtype=np.float64))
    if Z.shape[0] == 0:
        return []
    i = stats.class_row(c)
    d = Z - stats.means[i]
    dist = np.sqrt(np.clip(np.einsum("nj,jk,nk->n", d, stats.inv_covs[i], d), 0.0, None))
    return [int(j) for j in np.nonzero(dist > phi_border)[0]]


def export_stats(stats, path):
    """Plain-text dump of per-class mean and covariance (debugging / fixtures)."""
    with open(path, "w") as fh:
        fh.write(f"classes {' '.join(str(int(c)) for c in stats.classes)}\n")
        fh.write(f"latent_dim {stats.latent_dim}\n")
        for i, c in enumerate(stats.classes):
            fh.write(f"class {int(c)} count {int(stats.counts[i])}\n")
            fh.write("mean " + " ".join(repr(v) for v in stats.means[i]) + "\n")
            for row in stats.covs[i]:
                fh.write("cov " + " ".join(repr(v) for v in row) + "\n")
