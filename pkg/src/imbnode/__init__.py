"""Imbalanced node classification toolkit.

Latent-space minority oversampling over a two-block message-passing
network, a bilinear edge generator that attaches synthetic nodes to the
graph, the classical sampling/weighting baselines, and an experiment
harness with imbalance-aware metrics.
"""

from .graph import (
    ClassStats,
    Graph,
    SplitMasks,
    generate_sbm_graph,
    imbalance_ratio,
    load_graph,
    make_artificial_imbalance,
    make_proportional_split,
)
from .metrics import MetricsReport, accuracy, auc_macro, f_macro, full_report
from .optim import ParamStore, adam_step
from .oversample import (
    SamplingPlan,
    SyntheticBatch,
    baseline_duplicate,
    baseline_raw_smote,
    nearest_same_class,
    plan_from_scale,
    reweight_vector,
    smote_interpolate,
)
from .train import GS_VARIANTS, VARIANTS, RunRecord, TrainConfig, run_variant_grid, train

__version__ = "0.1.0"

__all__ = [
    "ClassStats",
    "Graph",
    "SplitMasks",
    "generate_sbm_graph",
    "imbalance_ratio",
    "load_graph",
    "make_artificial_imbalance",
    "make_proportional_split",
    "MetricsReport",
    "accuracy",
    "auc_macro",
    "f_macro",
    "full_report",
    "ParamStore",
    "adam_step",
    "SamplingPlan",
    "SyntheticBatch",
    "baseline_duplicate",
    "baseline_raw_smote",
    "nearest_same_class",
    "plan_from_scale",
    "reweight_vector",
    "smote_interpolate",
    "GS_VARIANTS",
    "VARIANTS",
    "RunRecord",
    "TrainConfig",
    "run_variant_grid",
    "train",
]
