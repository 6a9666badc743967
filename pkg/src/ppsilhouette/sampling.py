"""Per-cluster Poisson sampling plans (PPS and uniform).

Every Bernoulli decision is a pure function of ``(seed, phase, cluster,
point)`` through a counter-based hash, so a plan does not depend on the order
in which clusters or points are visited. The distributed engine relies on
this to reproduce the sequential plan exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import ClusteredDataset, UsageError

PHASE_INITIAL = 1
PHASE_FINAL = 2

STRATEGIES = ("pps", "uniform")

# an empty initial draw is redrawn up to this many times
INITIAL_REDRAWS = 16

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def keyed_uniform(seed: int, phase: int, cluster, points) -> np.ndarray:
    """Uniform [0, 1) variates keyed by (seed, phase, cluster, point)."""
    pts = np.asarray(points, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        h = _splitmix(np.uint64(int(seed) & _MASK64))
        h = _splitmix(h ^ np.uint64(phase))
        h = _splitmix(h ^ np.asarray(cluster, dtype=np.int64).astype(np.uint64))
        h = _splitmix(h ^ pts)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


@dataclass(frozen=True)
class EstimationParams:
    """Per-cluster expected sample size ``t`` plus the confidence parameter.

    Either give ``t`` directly, or build from an accuracy target with
    :meth:`from_accuracy`.
    """

    t: int
    delta: float = 0.1
    epsilon: float | None = None
    c: float | None = None

    def __post_init__(self):
        if int(self.t) != self.t or self.t < 1:
            raise UsageError(f"t must be a positive integer, got {self.t}")
        object.__setattr__(self, "t", int(self.t))
        if not 0 < self.delta < 1:
            raise UsageError(f"delta must lie in (0, 1), got {self.delta}")
        if self.epsilon is not None and not 0 < self.epsilon < 1:
            raise UsageError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.c is not None and self.c <= 0:
            raise UsageError(f"c must be positive, got {self.c}")

    @classmethod
    def from_accuracy(cls, n: int, k: int, epsilon: float, delta: float = 0.1, c: float = 1.0):
        if not 0 < epsilon < 1:
            raise UsageError(f"epsilon must lie in (0, 1), got {epsilon}")
        if not 0 < delta < 1:
            raise UsageError(f"delta must lie in (0, 1), got {delta}")
        t = math.ceil((c / (2.0 * epsilon**2)) * math.log(4.0 * n * k / delta))
        return cls(t=t, delta=delta, epsilon=epsilon, c=c)

    def to_dict(self) -> dict:
        return {"t": self.t, "delta": self.delta, "epsilon": self.epsilon, "c": self.c}


@dataclass(frozen=True)
class SampleEntry:
    point: int
    p: float


@dataclass(frozen=True, eq=False)
class ClusterSample:
    """Step-1 outcome for one cluster.

    ``members`` and ``probabilities`` are aligned and cover the whole
    cluster; ``drawn`` masks the members that entered the sample.
    """

    cluster: int
    mode: str
    members: np.ndarray
    probabilities: np.ndarray
    drawn: np.ndarray

    @property
    def drawn_points(self) -> np.ndarray:
        return self.members[self.drawn]

    @property
    def drawn_probabilities(self) -> np.ndarray:
        return self.probabilities[self.drawn]

    @property
    def entries(self) -> list[SampleEntry]:
        return [SampleEntry(int(i), float(p)) for i, p in zip(self.drawn_points, self.drawn_probabilities)]

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.drawn))


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    params: EstimationParams
    strategy: str
    seed: int
    per_cluster: tuple
    initial_samples: tuple
    # distance evaluations spent building the plan
    distance_evals: int = 0
    fallbacks: tuple = field(default=())

    @property
    def sample_sizes(self) -> list[int]:
        return [cs.size for cs in self.per_cluster]

    def sample_arrays(self):
        """Drawn points grouped by cluster with HT weights and block offsets."""
        pts = [cs.drawn_points for cs in self.per_cluster]
        wts = [1.0 / cs.drawn_probabilities for cs in self.per_cluster]
        offsets = np.zeros(len(pts) + 1, dtype=np.int64)
        np.cumsum([len(p) for p in pts], out=offsets[1:])
        return np.concatenate(pts), np.concatenate(wts), offsets

    def to_canonical_json(self) -> str:
        def fmt(x):
            return format(float(x), ".17g")

        doc = {
            "params": self.params.to_dict(),
            "strategy": self.strategy,
            "seed": int(self.seed),
            "initial_samples": [[int(i) for i in s0] for s0 in self.initial_samples],
            "fallbacks": list(self.fallbacks),
            "per_cluster": [
                {
                    "cluster": cs.cluster,
                    "mode": cs.mode,
                    "members": [int(i) for i in cs.members],
                    "probabilities": [fmt(p) for p in cs.probabilities],
                    "drawn": [int(i) for i in cs.drawn_points],
                }
                for cs in self.per_cluster
            ],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def initial_probability(size: int, k: int, delta: float) -> float:
    return min(1.0, (2.0 / size) * math.log(2.0 * k / delta))


def initial_draw_index(u: np.ndarray, q: float) -> np.ndarray:
    """Index of the first initial draw (0 = the original one) that includes a point.

    Redraws are independent Bernoulli(q) trials, so the index is geometric and
    can be read off the point's single keyed variate ``u`` by inversion. It is
    0 exactly when ``u < q``.
    """
    u = np.asarray(u, dtype=np.float64)
    if q >= 1.0:
        return np.zeros(len(u), dtype=np.int64)
    with np.errstate(divide="ignore"):
        later = np.floor(np.log1p(-u) / math.log1p(-q))
    return np.where(u < q, 0, np.maximum(later, 1)).astype(np.int64)


def resolve_initial_sample(points: np.ndarray, u: np.ndarray, q: float) -> np.ndarray:
    """Reference points from candidate points and their variates.

    Takes the first non-empty draw among the original and ``INITIAL_REDRAWS``
    redraws; if all are empty, the single point with the largest variate (a
    uniform choice over the cluster). Candidates must include every point of
    the first non-empty draw and the cluster's largest-variate point.
    """
    points, first = np.unique(np.asarray(points, dtype=np.int64), return_index=True)
    u = np.asarray(u)[first]
    r = initial_draw_index(u, q)
    if len(r) and r.min() <= INITIAL_REDRAWS:
        return points[r == r.min()]
    return points[[int(np.argmax(u))]] if len(points) else points


def draw_initial_sample(cd: ClusteredDataset, j: int, delta: float, seed: int) -> np.ndarray:
    """Poisson draw of the reference points used to size PPS probabilities.

    An empty draw is redrawn up to ``INITIAL_REDRAWS`` times; after that one
    member is forced in. The result is never empty.
    """
    members = cd.members[j]
    q = initial_probability(len(members), cd.k, delta)
    return resolve_initial_sample(members, keyed_uniform(seed, PHASE_INITIAL, j, members), q)


def pps_from_ratios(ratios: np.ndarray, size: int, t: int) -> np.ndarray:
    """p = min(1, t * max(1/|C|, ratio)), written so the uniform floor is exact."""
    return np.minimum(1.0, np.maximum(t / size, t * ratios))


def reference_sums(cd: ClusteredDataset, j: int, s0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distances member x reference and the sums W_{C_j}(ref).

    The sums go through the same compensated kernel the pipeline uses, so a
    single-worker pipeline reproduces them bit for bit.
    """
    X = cd.dataset.kernel_points
    members = cd.members[j]
    refs = np.ascontiguousarray(X[s0])
    D = _kernels.distance_block(np.ascontiguousarray(X[members]), refs, cd.metric.kernel_code)
    W = _kernels.weighted_cluster_sums(
        refs,
        np.ascontiguousarray(X[members].T),
        np.ones(len(members)),
        np.array([0, len(members)], dtype=np.int64),
        cd.metric.kernel_code,
    )[:, 0]
    return D, W


def pps_probabilities(cd: ClusteredDataset, j: int, s0, t: int, *, _block=None) -> np.ndarray | None:
    """PPS inclusion probabilities for every member of cluster ``j``.

    References with a zero distance sum are ignored; returns ``None`` when no
    usable reference is left (a cluster of exact duplicates), in which case
    callers fall back to uniform probabilities.
    """
    s0 = np.asarray(s0, dtype=np.int64)
    if len(s0) == 0:
        return None
    D, W = _block if _block is not None else reference_sums(cd, j, s0)
    usable = W > 0
    if not np.any(usable):
        return None
    ratios = (D[:, usable] / W[usable]).max(axis=1)
    return pps_from_ratios(ratios, len(cd.members[j]), t)


def uniform_probabilities(cd: ClusteredDataset, j: int, t: int) -> np.ndarray:
    size = len(cd.members[j])
    return np.full(size, min(1.0, t / size))


def build_plan(cd: ClusteredDataset, params: EstimationParams, strategy: str = "pps", seed: int = 0) -> SamplingPlan:
    """Step 1: choose inclusion probabilities per cluster and draw the samples."""
    if strategy not in STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}")
    if cd.k < 2:
        raise UsageError("sampling plans need k >= 2")
    t = params.t
    per_cluster = []
    initial = []
    fallbacks = []
    evals = 0
    for j, members in enumerate(cd.members):
        size = len(members)
        s0 = np.empty(0, dtype=np.int64)
        if t >= size:
            mode = "full"
            p = np.ones(size)
        elif strategy == "uniform":
            mode = "uniform"
            p = uniform_probabilities(cd, j, t)
        else:
            mode = "pps"
            s0 = draw_initial_sample(cd, j, params.delta, seed)
            block = reference_sums(cd, j, s0)
            evals += block[0].size
            p = pps_probabilities(cd, j, s0, t, _block=block)
            if p is None:
                fallbacks.append(j)
                p = uniform_probabilities(cd, j, t)
        drawn = keyed_uniform(seed, PHASE_FINAL, j, members) < p
        for arr in (p, drawn):
            arr.setflags(write=False)
        per_cluster.append(ClusterSample(j, mode, members, p, drawn))
        initial.append(s0)
    return SamplingPlan(params, strategy, int(seed), tuple(per_cluster), tuple(initial), evals, tuple(fallbacks))
