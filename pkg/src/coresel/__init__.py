"""Coverage-centric coreset selection toolkit."""

__version__ = "0.1.0"

from .datamodel import (
    EmbeddingMatrix,
    PRCurve,
    ScoreTable,
    SelectionResult,
    canonicalize_scores,
    load_embeddings,
    load_scores,
    load_selection,
    save_scores,
    save_selection,
    write_embeddings,
)
from .errors import DataError, UsageError
from .selection import (
    CcsParams,
    StrataPartition,
    ccs_select,
    coreset_budget,
    importance_sampling_select,
    moderate_select,
    partition_strata,
    prune_hard_select,
    prune_hardest,
    random_select,
    stratified_only_select,
    topk_hard_select,
)
from .coverage import (
    CoverageReport,
    auc_pr,
    auc_pr_direct,
    compare_coverage,
    coverage_report,
    min_distances,
    partial_cover_radius,
    pr_curve,
)
from .synthbench import (
    SyntheticDataset,
    SweepResult,
    analytic_difficulty,
    beta_grid_search,
    generate_mixture,
    inject_label_noise,
    knn_accuracy,
    logreg_accuracy,
    make_preset,
    sweep,
)

__all__ = [
    "CcsParams",
    "CoverageReport",
    "DataError",
    "EmbeddingMatrix",
    "PRCurve",
    "ScoreTable",
    "SelectionResult",
    "StrataPartition",
    "SweepResult",
    "SyntheticDataset",
    "UsageError",
    "analytic_difficulty",
    "auc_pr",
    "auc_pr_direct",
    "beta_grid_search",
    "canonicalize_scores",
    "ccs_select",
    "compare_coverage",
    "coreset_budget",
    "coverage_report",
    "generate_mixture",
    "importance_sampling_select",
    "inject_label_noise",
    "knn_accuracy",
    "load_embeddings",
    "load_scores",
    "load_selection",
    "logreg_accuracy",
    "make_preset",
    "min_distances",
    "moderate_select",
    "partial_cover_radius",
    "partition_strata",
    "pr_curve",
    "prune_hard_select",
    "prune_hardest",
    "random_select",
    "save_scores",
    "save_selection",
    "stratified_only_select",
    "sweep",
    "topk_hard_select",
    "write_embeddings",
]
