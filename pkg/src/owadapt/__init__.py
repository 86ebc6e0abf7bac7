"""Open-world adaptation at desk scale: imbalance-aware contrastive
pre-training with borderline refinement, plus self-supervised online
post-training with pseudo-labeling and unseen-class detection on a
configurable synthetic shift stream."""

from .checkpoint import load_checkpoint, save_checkpoint
from .harness import (ExperimentConfig, MetricsRecord, emit_results,
                      run_experiment, score_batch)
from .model import DenseNet, apply_gradient, cross_entropy, entropy, softmax
from .posttrain import (DetectThresholds, GateThresholds, Prediction,
                        PseudoLabelOutcome, detect_and_predict, pseudo_label,
                        run_timestep)
from .pretrain import PretrainConfig, run_pretraining
from .stats import ClassStats, fit_stats, mahalanobis, md_margin, md_set
from .stream import ShiftSchedule, TimestepBatch, WorldSpec, emit_batch, make_pretrain_set

__all__ = [
    "ClassStats", "DenseNet", "DetectThresholds", "ExperimentConfig",
    "GateThresholds", "MetricsRecord", "Prediction", "PretrainConfig",
    "PseudoLabelOutcome", "ShiftSchedule", "TimestepBatch", "WorldSpec",
    "apply_gradient", "cross_entropy", "detect_and_predict", "emit_batch",
    "emit_results", "entropy", "fit_stats", "load_checkpoint", "mahalanobis",
    "make_pretrain_set", "md_margin", "md_set", "pseudo_label",
    "run_experiment", "run_pretraining", "run_timestep", "save_checkpoint",
    "score_batch", "softmax",
]
