"""Versioned binary checkpoints for a model and (optionally) class statistics.

Stored as a numpy .npz archive of float64 arrays; round-trips are bit-exact.
"""

from __future__ import annotations

import zipfile

import numpy as np

from .errors import CheckpointError
from .model import DenseNet
from .stats import ClassStats

FORMAT_VERSION = 1


def save_checkpoint(path, model, stats=None):
    payload = {
        "version": np.array([FORMAT_VERSION], dtype=np.int64),
        "layer_sizes": np.asarray(model.layer_sizes, dtype=np.int64),
        "latent_index": np.array([model.latent_index], dtype=np.int64),
        "frozen_boundary": np.array([model.frozen_boundary], dtype=np.int64),
        "has_stats": np.array([stats is not None], dtype=np.int64),
    }
    for k in range(model.n_layers):
        payload[f"W{k}"] = model.weights[k]
        payload[f"b{k}"] = model.biases[k]
    if stats is not None:
        payload["stats_classes"] = stats.classes
        payload["stats_means"] = stats.means
        payload["stats_covs"] = stats.covs
        payload["stats_inv_covs"] = stats.inv_covs
        payload["stats_counts"] = stats.counts
    np.savez(path, **payload)


def load_checkpoint(path):
    try:
        with np.load(path) as data:
            if "version" not in data:
                raise CheckpointError(f"{path}: not a checkpoint file")
            version = int(data["version"][0])
            if version != FORMAT_VERSION:
                raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
            sizes = [int(s) for s in data["layer_sizes"]]
            model = DenseNet.__new__(DenseNet)
            model.layer_sizes = sizes
            model.latent_index = int(data["latent_index"][0])
            model.frozen_boundary = int(data["frozen_boundary"][0])
            model.weights = []
            model.biases = []
            for k in range(len(sizes) - 1):
                model.weights.append(np.array(data[f"W{k}"]))
                model.biases.append(np.array(data[f"b{k}"]))
            stats = None
            if int(data["has_stats"][0]):
                stats = ClassStats(
                    classes=np.array(data["stats_classes"]),
                    means=np.array(data["stats_means"]),
                    covs=np.array(data["stats_covs"]),
                    inv_covs=np.array(data["stats_inv_covs"]),
                    counts=np.array(data["stats_counts"]),
                )
            return model, stats
    except CheckpointError:
        raise
    except (OSError, ValueError, KeyError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"{path}: corrupt or unreadable checkpoint ({exc})") from exc
