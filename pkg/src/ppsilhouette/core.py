"""Metric-space primitives, datasets and validated clusterings."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels


class UsageError(ValueError):
    """An operation was called with arguments it does not support."""


class ValidationError(ValueError):
    """Input data or labels do not describe a valid clustering."""


class Metric(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    SQUARED_EUCLIDEAN = "squared_euclidean"
    MANHATTAN = "manhattan"
    COSINE = "cosine_distance"

    @classmethod
    def parse(cls, value: "str | Metric") -> "Metric":
        if isinstance(value, Metric):
            return value
        key = value.strip().lower().replace("-", "_")
        aliases = {
            "sqeuclidean": cls.SQUARED_EUCLIDEAN,
            "cosine": cls.COSINE,
            "l2": cls.EUCLIDEAN,
            "l1": cls.MANHATTAN,
            "cityblock": cls.MANHATTAN,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise UsageError(f"unknown metric {value!r}") from None

    @property
    def is_metric(self) -> bool:
        """False for squared Euclidean, which breaks the triangle inequality."""
        return self is not Metric.SQUARED_EUCLIDEAN

    @property
    def kernel_code(self) -> int:
        return {
            Metric.EUCLIDEAN: _kernels.EUCLIDEAN,
            Metric.SQUARED_EUCLIDEAN: _kernels.SQUARED_EUCLIDEAN,
            Metric.MANHATTAN: _kernels.MANHATTAN,
            Metric.COSINE: _kernels.COSINE_UNIT,
        }[self]


def _kernel_rows(metric: Metric, a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if metric is Metric.COSINE:
        norms = np.linalg.norm(a, axis=1)
        if np.any(norms == 0):
            raise UsageError("cosine distance is undefined for zero vectors")
        a = a / norms[:, None]
    return a


def distance(metric: "Metric | str", p, q) -> float:
    """Distance between two points under ``metric``.

    >>> distance("euclidean", (0, 0), (3, 4))
    5.0
    """
    metric = Metric.parse(metric)
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    q = np.atleast_1d(np.asarray(q, dtype=np.float64))
    if p.ndim != 1 or p.shape != q.shape:
        raise UsageError(f"dimension mismatch: {p.shape} vs {q.shape}")
    rows = _kernel_rows(metric, np.stack([p, q]))
    return float(_kernels.distance_block(rows[:1], rows[1:], metric.kernel_code)[0, 0])


def pairwise_distances(metric: "Metric | str", A, B) -> np.ndarray:
    """Dense |A| x |B| distance matrix."""
    metric = Metric.parse(metric)
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise UsageError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return _kernels.distance_block(
        _kernel_rows(metric, A), _kernel_rows(metric, B), metric.kernel_code
    )


@dataclass(frozen=True, eq=False)
class Dataset:
    """n points in d-dimensional space, paired with the metric used on them."""

    points: np.ndarray
    metric: Metric = Metric.EUCLIDEAN

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValidationError(f"points must be a non-empty n x d matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("points contain NaN or infinite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        if self.metric is Metric.COSINE and np.any(np.linalg.norm(pts, axis=1) == 0):
            raise ValidationError("cosine distance requires non-zero points")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @cached_property
    def kernel_points(self) -> np.ndarray:
        """Rows fed to the compiled kernels (unit vectors for cosine)."""
        rows = _kernel_rows(self.metric, self.points)
        rows.setflags(write=False)
        return rows

    def with_metric(self, metric: "Metric | str") -> "Dataset":
        return Dataset(self.points, Metric.parse(metric))

    def distance(self, i: int, j: int) -> float:
        X = self.kernel_points
        return float(_kernels.distance_block(X[i : i + 1], X[j : j + 1], self.metric.kernel_code)[0, 0])


@dataclass(frozen=True, eq=False)
class ClusteredDataset:
    """A dataset with a validated k-way partition. Build via ``validate_clustering``."""

    dataset: Dataset
    labels: np.ndarray
    k: int
    members: tuple
    sizes: np.ndarray
    # points grouped by cluster, ascending index within each group
    order: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def metric(self) -> Metric:
        return self.dataset.metric

    @cached_property
    def grouped_points(self) -> np.ndarray:
        rows = np.ascontiguousarray(self.dataset.kernel_points[self.order])
        rows.setflags(write=False)
        return rows

    @cached_property
    def grouped_columns(self) -> np.ndarray:
        """``grouped_points`` transposed to d x n, the layout kernels sum over."""
        cols = np.ascontiguousarray(self.grouped_points.T)
        cols.setflags(write=False)
        return cols

    def with_metric(self, metric: "Metric | str") -> "ClusteredDataset":
        return validate_clustering(self.dataset.with_metric(metric), self.labels)


def validate_clustering(dataset: Dataset, labels, k: int | None = None) -> ClusteredDataset:
    """Check a labeling and build the per-cluster index.

    Without ``k``, arbitrary integer label values are remapped to ``0..k-1``
    in increasing order, so ``[0, 2, 2, 0]`` becomes two clusters of size 2.
    With ``k`` given, labels must already lie in ``[0, k)`` and every cluster
    must be non-empty.
    """
    raw = np.asarray(labels)
    if raw.ndim != 1 or raw.shape[0] != dataset.n:
        raise ValidationError(f"expected {dataset.n} labels, got shape {raw.shape}")
    if raw.dtype.kind == "f":
        if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
            raise ValidationError("labels must be integers")
        raw = raw.astype(np.int64)
    if raw.dtype.kind not in "iu":
        raise ValidationError(f"labels must be integers, got dtype {raw.dtype}")
    if np.any(raw < 0):
        raise ValidationError("labels must be non-negative")
    if k is None:
        values, dense = np.unique(raw, return_inverse=True)
        dense = dense.astype(np.int64).reshape(-1)
        k = len(values)
    else:
        dense = raw.astype(np.int64)
        if np.any(dense >= k):
            raise ValidationError(f"label {int(dense.max())} out of range for k = {k}")
        empty = np.flatnonzero(np.bincount(dense, minlength=k) == 0)
        if len(empty):
            raise ValidationError(f"cluster {int(empty[0])} is empty")
    if k < 2:
        raise ValidationError("a clustering needs at least 2 clusters (b(e) is undefined for k = 1)")
    sizes = np.bincount(dense, minlength=k).astype(np.int64)
    order = np.argsort(dense, kind="stable").astype(np.int64)
    offsets = np.zeros(k + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    members = tuple(order[offsets[j] : offsets[j + 1]] for j in range(k))
    for arr in (dense, sizes, order, offsets, *members):
        arr.setflags(write=False)
    return ClusteredDataset(dataset, dense, k, members, sizes, order, offsets)
