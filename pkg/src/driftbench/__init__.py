"""Covariate-shift scoring and leave-one-domain-out benchmarking.

Pipeline: pack clip features (dataset), cluster them (clustering), score
per-group shift as mean-plus-scaled-spread over prototype distances
(shift_metric), carve hold-one-domain-out splits (splits), train a small
two-layer one-vs-all classifier (mlp, training), and correlate shift
scores with per-domain accuracy (analysis). synth provides seeded
desk-scale datasets with injectable covariate offsets.
"""

__version__ = "0.1.0"

from .analysis import correlate_shift_accuracy, pearson, spearman
from .clustering import ClusterModel, assign_nearest, kmeans_fit
from .dataset import (
    ClipRecord,
    FeatureSet,
    Manifest,
    load_feature_pack,
    load_manifest,
    pool_temporal,
    write_feature_pack,
    write_manifest,
)
from .mlp import MlpParams, forward, init_params, load_checkpoint, save_checkpoint
from .shift_metric import GroupingMode, ShiftReport, score_dataset, shift_scores
from .splits import SplitSpec, build_all_lodo_splits, build_lodo_split
from .synth import SyntheticSpec, generate, offset_sweep
from .training import EvalReport, TrainConfig, TrainingData, evaluate, train

__all__ = [
    "ClipRecord",
    "ClusterModel",
    "EvalReport",
    "FeatureSet",
    "GroupingMode",
    "Manifest",
    "MlpParams",
    "ShiftReport",
    "SplitSpec",
    "SyntheticSpec",
    "TrainConfig",
    "TrainingData",
    "__version__",
    "assign_nearest",
    "build_all_lodo_splits",
    "build_lodo_split",
    "correlate_shift_accuracy",
    "evaluate",
    "forward",
    "generate",
    "init_params",
    "kmeans_fit",
    "load_checkpoint",
    "load_feature_pack",
    "load_manifest",
    "offset_sweep",
    "pearson",
    "pool_temporal",
    "save_checkpoint",
    "score_dataset",
    "shift_scores",
    "spearman",
    "train",
    "write_feature_pack",
    "write_manifest",
]
