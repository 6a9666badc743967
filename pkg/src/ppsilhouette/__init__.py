"""Exact and sampling-based silhouette, cohesion and separation."""

from .core import (
    ClusteredDataset,
    Dataset,
    Metric,
    UsageError,
    ValidationError,
    distance,
    pairwise_distances,
    validate_clustering,
)
from .engine import ResourceError, memory_report, run_pipeline
from .estimator import (
    SilhouetteEstimate,
    estimate_cohesion_separation,
    estimate_silhouette,
    simplified_silhouette,
    w_hat,
)
from .exact import (
    cohesion_exact,
    cohesion_separation_exact,
    separation_exact,
    silhouette_exact,
    silhouette_fs,
    silhouette_sq_euclidean_closed_form,
    w_sum,
)
from .sampling import EstimationParams, SamplingPlan, build_plan

__all__ = [
    "ClusteredDataset",
    "Dataset",
    "EstimationParams",
    "Metric",
    "ResourceError",
    "SamplingPlan",
    "SilhouetteEstimate",
    "UsageError",
    "ValidationError",
    "build_plan",
    "cohesion_exact",
    "cohesion_separation_exact",
    "distance",
    "estimate_cohesion_separation",
    "estimate_silhouette",
    "memory_report",
    "pairwise_distances",
    "run_pipeline",
    "separation_exact",
    "silhouette_exact",
    "silhouette_fs",
    "silhouette_sq_euclidean_closed_form",
    "simplified_silhouette",
    "validate_clustering",
    "w_hat",
    "w_sum",
]
