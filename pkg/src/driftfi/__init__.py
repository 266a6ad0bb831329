"""Streaming forests with drift-aware per-instance feature importance.

The pieces compose bottom-up: incremental Hoeffding-tree forests
(:mod:`driftfi.forest`), two importance engines over a trained forest
(:mod:`driftfi.explain`), distribution-shift detection between training
batches (:mod:`driftfi.drift`), the selector that arbitrates between
the engines (:mod:`driftfi.dafi`), and the prequential experiment
harness plus CLI (:mod:`driftfi.harness`, :mod:`driftfi.cli`).
"""

from .dafi import BatchExplanation, DafiConfig, explain_batch
from .data import (
    BUILTIN_SCHEMAS,
    DatasetSchema,
    SyntheticSpec,
    generate,
    load_csv,
    mask_features,
)
from .drift import DriftReport, detect, ks_statistic
from .errors import (
    ConfigError,
    DriftFiError,
    FeatureBudgetError,
    IngestionError,
    InsufficientDataError,
    MalformedInstanceError,
    SchemaMismatchError,
    UndefinedImpurityError,
)
from .explain import (
    CoalitionEvaluator,
    ImportanceVector,
    gini,
    mdi_importance,
    mdi_node,
    shap_importance,
    shapley,
)
from .forest import ArfConfig, ArfEnsemble, HoeffdingTree, Instance, NodeStats
from .harness import (
    BatchPlan,
    ExperimentReport,
    dynamic_top_k,
    run_experiment,
    saved_runtime_pct,
    spearman_norm,
    topk_exact_match,
    topk_set_match,
)

__version__ = "0.1.0"

__all__ = [
    "ArfConfig",
    "ArfEnsemble",
    "BatchExplanation",
    "BatchPlan",
    "BUILTIN_SCHEMAS",
    "CoalitionEvaluator",
    "ConfigError",
    "DafiConfig",
    "DatasetSchema",
    "DriftFiError",
    "DriftReport",
    "ExperimentReport",
    "FeatureBudgetError",
    "HoeffdingTree",
    "ImportanceVector",
    "IngestionError",
    "Instance",
    "InsufficientDataError",
    "MalformedInstanceError",
    "NodeStats",
    "SchemaMismatchError",
    "SyntheticSpec",
    "UndefinedImpurityError",
    "detect",
    "dynamic_top_k",
    "explain_batch",
    "generate",
    "gini",
    "ks_statistic",
    "load_csv",
    "mask_features",
    "mdi_importance",
    "mdi_node",
    "run_experiment",
    "saved_runtime_pct",
    "shap_importance",
    "shapley",
    "spearman_norm",
    "topk_exact_match",
    "topk_set_match",
]
