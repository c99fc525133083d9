"""leafdistill: tree-region dataset distillation for tabular fraud data.

Train a random forest, turn each leaf into an auditable hyperrectangle
rule region, sample uniformly inside the regions to build a compact
synthetic surrogate dataset, filter contested samples by vote
disagreement, and audit the result for utility and memorization risk.
"""

__version__ = "0.1.0"

from .data import (
    ClusterAssignment,
    Dataset,
    FeatureStandardizer,
    KMeansPartitioner,
    StandardizationParams,
    ingest_csv,
    inverse_standardize,
    kmeans_partition,
    standardize,
    train_test_split,
)
from .distill import (
    DistillResult,
    LeafRegion,
    Rationale,
    SyntheticSample,
    distill,
    explain_sample,
    extract_regions,
    rule_summary,
    synthesize,
)
from .errors import (
    ArgumentError,
    ConfigError,
    InternalError,
    LeafDistillError,
    ParseError,
    SchemaError,
    StageError,
    UndefinedMetricError,
    UnknownRegionError,
)
from .evalmetrics import (
    CrossClusterResult,
    MetricsBundle,
    cross_cluster_eval,
    evaluate_scores,
    micro_f1,
    precision_recall,
    roc_auc,
)
from .forest import ForestParams, RandomForest, evaluator_defaults, generator_defaults
from .logistic import LogisticRegression
from .privacy import (
    AttackModel,
    MIAReport,
    SimilarityReport,
    nn_cosine_similarity,
    run_mia,
    train_shadow_attack,
)
from .uncertainty import (
    FilterPolicy,
    GridSearchResult,
    disagreement,
    filter_samples,
    grid_search,
)

__all__ = [
    "ArgumentError",
    "AttackModel",
    "ClusterAssignment",
    "ConfigError",
    "CrossClusterResult",
    "Dataset",
    "DistillResult",
    "FeatureStandardizer",
    "FilterPolicy",
    "ForestParams",
    "GridSearchResult",
    "InternalError",
    "KMeansPartitioner",
    "LeafDistillError",
    "LeafRegion",
    "LogisticRegression",
    "MIAReport",
    "MetricsBundle",
    "ParseError",
    "RandomForest",
    "Rationale",
    "SchemaError",
    "SimilarityReport",
    "StageError",
    "StandardizationParams",
    "SyntheticSample",
    "UndefinedMetricError",
    "UnknownRegionError",
    "cross_cluster_eval",
    "disagreement",
    "distill",
    "evaluate_scores",
    "evaluator_defaults",
    "explain_sample",
    "extract_regions",
    "filter_samples",
    "generator_defaults",
    "grid_search",
    "ingest_csv",
    "inverse_standardize",
    "kmeans_partition",
    "micro_f1",
    "nn_cosine_similarity",
    "precision_recall",
    "roc_auc",
    "rule_summary",
    "run_mia",
    "standardize",
    "synthesize",
    "train_shadow_attack",
    "train_test_split",
]
