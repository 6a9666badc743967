"""Exact internal measures: silhouette (three routes), cohesion and separation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .core import ClusteredDataset, Metric, UsageError

# rows of point queries per kernel call; bounds the n x k scratch matrix
QUERY_CHUNK = 1 << 15


@dataclass(frozen=True)
class PointSilhouette:
    a: float
    b: float
    s: float


@dataclass(frozen=True)
class PointSilhouettes:
    """Per-point a, b and s stored column-wise."""

    a: np.ndarray
    b: np.ndarray
    s: np.ndarray

    def __len__(self):
        return len(self.s)

    def __getitem__(self, i) -> PointSilhouette:
        return PointSilhouette(float(self.a[i]), float(self.b[i]), float(self.s[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


@dataclass(frozen=True)
class CohesionSeparation:
    cohesion: float
    separation: float


class ExactSilhouette(NamedTuple):
    overall: float
    per_point: PointSilhouettes


class PrunedSilhouette(NamedTuple):
    overall: float
    skipped_clusters: int
    distance_evals: int


def _require_k2(cd: ClusteredDataset):
    if cd.k < 2:
        raise UsageError("silhouette needs k >= 2")


def assemble_silhouette(sums: np.ndarray, labels: np.ndarray, sizes: np.ndarray) -> PointSilhouettes:
    """Turn per-point cluster distance sums into a, b and s.

    ``sums[i, j]`` is (an estimate of) the sum of distances from point i to
    cluster j. Singleton clusters get a = 0 and s = 0; a = b = 0 gives s = 0.
    """
    n, k = sums.shape
    rows = np.arange(n)
    own_size = sizes[labels]
    a = np.where(own_size > 1, sums[rows, labels] / np.maximum(own_size - 1, 1), 0.0)
    means = sums / sizes[None, :]
    means[rows, labels] = np.inf
    b = means.min(axis=1)
    m = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(m > 0, (b - a) / np.where(m > 0, m, 1.0), 0.0)
    s[own_size == 1] = 0.0
    return PointSilhouettes(a, b, s)


def mean_of(values: np.ndarray) -> float:
    return math.fsum(values.tolist()) / len(values)


def cluster_sums(cd: ClusteredDataset, queries: np.ndarray | None = None) -> np.ndarray:
    """Exact W matrix: ``out[q, j]`` = sum of distances from query q to cluster j."""
    X = cd.dataset.kernel_points
    queries = np.arange(cd.n) if queries is None else np.asarray(queries, dtype=np.int64)
    ST = cd.grouped_columns
    ones = np.ones(cd.n)
    out = np.empty((len(queries), cd.k))
    for lo in range(0, len(queries), QUERY_CHUNK):
        q = queries[lo : lo + QUERY_CHUNK]
        out[lo : lo + len(q)] = _kernels.weighted_cluster_sums(
            np.ascontiguousarray(X[q]), ST, ones, cd.offsets, cd.metric.kernel_code
        )
    return out


def w_sum(cd: ClusteredDataset, e: int, j: int) -> float:
    """Sum of distances from point ``e`` to every member of cluster ``j``."""
    if not 0 <= j < cd.k:
        raise IndexError(f"cluster {j} out of range")
    if not 0 <= e < cd.n:
        raise IndexError(f"point {e} out of range")
    return float(cluster_sums(cd, [e])[0, j])


def silhouette_exact(cd: ClusteredDataset) -> ExactSilhouette:
    """Silhouette by definition, O(n^2) distance evaluations."""
    _require_k2(cd)
    per_point = assemble_silhouette(cluster_sums(cd), cd.labels, cd.sizes)
    return ExactSilhouette(mean_of(per_point.s), per_point)


def silhouette_fs(cd: ClusteredDataset) -> PrunedSilhouette:
    """Exact silhouette that skips candidate clusters via centroid bounds.

    For a point e, other clusters are visited by increasing centroid distance;
    a cluster is skipped once d(e, centroid) is at least the smallest mean
    distance found so far. Since the mean of a convex distance is bounded
    below by the distance to the arithmetic mean, nothing skipped could have
    lowered b(e). Restricted to Euclidean and Manhattan distances.
    """
    _require_k2(cd)
    if cd.metric not in (Metric.EUCLIDEAN, Metric.MANHATTAN):
        raise UsageError(f"centroid pruning is not valid for {cd.metric.value}")
    centroids = np.ascontiguousarray(
        np.stack([cd.dataset.points[m].mean(axis=0) for m in cd.members])
    )
    cluster_of_row = cd.labels[cd.order]
    a_g, b_g, skipped, evals = _kernels.pruned_silhouette_terms(
        cd.grouped_points, cd.grouped_columns, cd.offsets, cluster_of_row, centroids, cd.metric.kernel_code
    )
    a = np.empty(cd.n)
    b = np.empty(cd.n)
    a[cd.order] = a_g
    b[cd.order] = b_g
    own_size = cd.sizes[cd.labels]
    m = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(m > 0, (b - a) / np.where(m > 0, m, 1.0), 0.0)
    s[own_size == 1] = 0.0
    return PrunedSilhouette(mean_of(s), int(skipped), int(evals))


def silhouette_sq_euclidean_closed_form(cd: ClusteredDataset) -> float:
    """Squared-Euclidean silhouette in O(nkd) from per-cluster aggregates.

    Uses sum_{x in C} ||e - x||^2 = |C| ||e||^2 - 2 e.S_C + Q_C with
    S_C the coordinate sum and Q_C the sum of squared norms of C.
    """
    _require_k2(cd)
    if cd.metric is not Metric.SQUARED_EUCLIDEAN:
        raise UsageError("closed form requires the squared_euclidean metric")
    X = cd.dataset.points
    sq = np.einsum("ij,ij->i", X, X)
    S = np.zeros((cd.k, X.shape[1]))
    np.add.at(S, cd.labels, X)
    Q = np.bincount(cd.labels, weights=sq, minlength=cd.k)
    sums = cd.sizes[None, :] * sq[:, None] - 2.0 * (X @ S.T) + Q[None, :]
    # cancellation can leave tiny negatives
    np.maximum(sums, 0.0, out=sums)
    per_point = assemble_silhouette(sums, cd.labels, cd.sizes)
    return mean_of(per_point.s)


def block_sums(sums: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """``B[j1, j2]`` = sum over e in C_j1 of W_{C_j2}(e)."""
    B = np.zeros((k, k))
    np.add.at(B, labels, sums)
    return B


def cohesion_from_blocks(B: np.ndarray, sizes: np.ndarray) -> float:
    pairs = float(np.sum(sizes * (sizes - 1) // 2))
    if pairs == 0:
        raise UsageError("cohesion is undefined when every cluster is a singleton")
    return 0.5 * float(np.trace(B)) / pairs


def separation_from_blocks(B: np.ndarray, sizes: np.ndarray) -> float:
    k = len(sizes)
    if k < 2:
        raise UsageError("separation needs k >= 2")
    iu = np.triu_indices(k, 1)
    denom = float(np.sum(np.outer(sizes, sizes)[iu]))
    return float(np.sum(B[iu])) / denom


def cohesion_exact(cd: ClusteredDataset) -> float:
    """Average distance over unordered pairs inside the same cluster."""
    return cohesion_from_blocks(block_sums(cluster_sums(cd), cd.labels, cd.k), cd.sizes)


def separation_exact(cd: ClusteredDataset) -> float:
    """Average distance over pairs taken from two different clusters."""
    return separation_from_blocks(block_sums(cluster_sums(cd), cd.labels, cd.k), cd.sizes)


def cohesion_separation_exact(cd: ClusteredDataset) -> CohesionSeparation:
    B = block_sums(cluster_sums(cd), cd.labels, cd.k)
    return CohesionSeparation(cohesion_from_blocks(B, cd.sizes), separation_from_blocks(B, cd.sizes))
