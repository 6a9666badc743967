"""Horvitz-Thompson estimation of distance sums and the measures built on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import ClusteredDataset, Metric, UsageError
from .exact import (
    QUERY_CHUNK,
    PointSilhouettes,
    assemble_silhouette,
    block_sums,
    cohesion_from_blocks,
    mean_of,
    separation_from_blocks,
)
from .sampling import ClusterSample, EstimationParams, SamplingPlan, build_plan


@dataclass(frozen=True, eq=False)
class SilhouetteEstimate:
    overall: float
    plan_summary: list
    distance_evals: int
    per_point: PointSilhouettes | None = None
    plan: SamplingPlan | None = None


def w_hat(cd: ClusteredDataset, e: int, sample: ClusterSample) -> float:
    """Estimate of the distance sum from ``e`` to ``sample``'s cluster."""
    X = cd.dataset.kernel_points
    pts = sample.drawn_points
    wts = 1.0 / sample.drawn_probabilities
    out = _kernels.weighted_cluster_sums(
        np.ascontiguousarray(X[e : e + 1]),
        np.ascontiguousarray(X[pts].T),
        wts,
        np.array([0, len(pts)], dtype=np.int64),
        cd.metric.kernel_code,
    )
    return float(out[0, 0])


def estimated_sums(cd: ClusteredDataset, plan: SamplingPlan, queries=None) -> np.ndarray:
    """Matrix of estimated W sums, one row per query point, one column per cluster."""
    X = cd.dataset.kernel_points
    queries = np.arange(cd.n) if queries is None else np.asarray(queries, dtype=np.int64)
    pts, wts, offsets = plan.sample_arrays()
    ST = np.ascontiguousarray(X[pts].T)
    out = np.empty((len(queries), cd.k))
    for lo in range(0, len(queries), QUERY_CHUNK):
        q = queries[lo : lo + QUERY_CHUNK]
        out[lo : lo + len(q)] = _kernels.weighted_cluster_sums(
            np.ascontiguousarray(X[q]), ST, wts, offsets, cd.metric.kernel_code
        )
    return out


def estimate_from_plan(cd: ClusteredDataset, plan: SamplingPlan, per_point: bool = False) -> SilhouetteEstimate:
    """Step 2 given a fixed plan."""
    sums = estimated_sums(cd, plan)
    points = assemble_silhouette(sums, cd.labels, cd.sizes)
    sizes = plan.sample_sizes
    evals = plan.distance_evals + cd.n * int(sum(sizes))
    return SilhouetteEstimate(
        overall=mean_of(points.s),
        plan_summary=sizes,
        distance_evals=evals,
        per_point=points if per_point else None,
        plan=plan,
    )


def estimate_silhouette(
    cd: ClusteredDataset,
    params: EstimationParams,
    strategy: str = "pps",
    seed: int = 0,
    per_point: bool = False,
) -> SilhouetteEstimate:
    """Sampling-based silhouette estimate.

    Parameters
    ----------
    cd : ClusteredDataset
        Clustering to evaluate, k >= 2.
    params : EstimationParams
        Expected per-cluster sample size ``t`` and confidence ``delta``.
    strategy : {"pps", "uniform"}
        ``pps`` sizes inclusion probabilities by each point's share of the
        distance sums of a few reference points; ``uniform`` uses t/|C|.
    seed : int
        Key of the sampling decisions; equal seeds give equal estimates.
    per_point : bool
        Keep the estimated a, b and s of every point.
    """
    if cd.k < 2:
        raise UsageError("silhouette needs k >= 2")
    plan = build_plan(cd, params, strategy, seed)
    return estimate_from_plan(cd, plan, per_point)


def estimate_cohesion_separation(
    cd: ClusteredDataset, params: EstimationParams, seed: int = 0, strategy: str = "pps"
) -> tuple[float, float]:
    """Cohesion and separation with every W sum replaced by its estimate."""
    plan = build_plan(cd, params, strategy, seed)
    B = block_sums(estimated_sums(cd, plan), cd.labels, cd.k)
    return cohesion_from_blocks(B, cd.sizes), separation_from_blocks(B, cd.sizes)


def simplified_silhouette(cd: ClusteredDataset, variant: str = "plain") -> float:
    """Silhouette surrogate measuring distances to cluster centroids.

    ``variant="squared"`` squares both centroid distances.
    """
    if cd.k < 2:
        raise UsageError("silhouette needs k >= 2")
    if variant not in ("plain", "squared"):
        raise UsageError(f"unknown simplified-silhouette variant {variant!r}")
    X = cd.dataset.points
    centroids = np.zeros((cd.k, X.shape[1]))
    np.add.at(centroids, cd.labels, X)
    centroids /= cd.sizes[:, None]
    rows = cd.dataset.kernel_points
    crow = centroids
    if cd.metric is Metric.COSINE:
        norms = np.linalg.norm(centroids, axis=1)
        if np.any(norms == 0):
            raise UsageError("a cluster centroid is the zero vector; cosine distance undefined")
        crow = centroids / norms[:, None]
    D = _kernels.distance_block(np.ascontiguousarray(rows), np.ascontiguousarray(crow), cd.metric.kernel_code)
    if variant == "squared":
        D = D * D
    idx = np.arange(cd.n)
    a = D[idx, cd.labels]
    D[idx, cd.labels] = np.inf
    b = D.min(axis=1)
    m = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(m > 0, (b - a) / np.where(m > 0, m, 1.0), 0.0)
    return mean_of(s)
