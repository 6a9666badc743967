"""Synthetic data, a small k-medoids, and the experiment harness."""

from __future__ import annotations

import csv
import json
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import ClusteredDataset, Dataset, Metric, UsageError, validate_clustering
from .engine import run_pipeline
from .estimator import estimate_silhouette, simplified_silhouette
from .exact import silhouette_exact, silhouette_fs
from .sampling import EstimationParams


@dataclass(frozen=True)
class SyntheticSpec:
    """Points uniform in a ball plus a few far outliers on a concentric sphere."""

    n: int
    seed: int = 0
    inlier_radius: float = 1.0
    outlier_radius: float = 1e4
    outliers: int = 10
    dim: int = 3

    def __post_init__(self):
        if self.n <= self.outliers:
            raise UsageError(f"n must exceed the number of outliers ({self.outliers}), got {self.n}")


def _directions(rng: np.random.Generator, m: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((m, dim))
    norms = np.linalg.norm(v, axis=1)
    while np.any(norms == 0):  # pragma: no cover - measure-zero event
        bad = norms == 0
        v[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(v, axis=1)
    return v / norms[:, None]


def generate_synthetic(spec: SyntheticSpec, metric: Metric = Metric.EUCLIDEAN) -> Dataset:
    """Inliers uniform in the closed ball, then the outliers on the outer sphere."""
    rng = np.random.default_rng(spec.seed)
    m = spec.n - spec.outliers
    radii = spec.inlier_radius * rng.random(m) ** (1.0 / spec.dim)
    inliers = _directions(rng, m, spec.dim) * radii[:, None]
    outliers = _directions(rng, spec.outliers, spec.dim) * spec.outlier_radius
    return Dataset(np.vstack([inliers, outliers]), metric)


@dataclass
class KMedoidsResult:
    clustering: ClusteredDataset
    medoids: np.ndarray
    objective_history: list = field(default_factory=list)
    iterations: int = 0


def _assign(X, medoids, metric):
    return _kernels.nearest_center(X, np.ascontiguousarray(X[medoids]), metric)


def k_medoids_trace(ds: Dataset, k: int, seed: int = 0, max_iters: int = 100) -> KMedoidsResult:
    """Voronoi-iteration k-medoids, keeping the objective after each step.

    Medoids start at k distinct random points. Each iteration assigns every
    point to its nearest medoid (ties to the lower medoid index) and moves
    each medoid to the member with the smallest distance sum. A cluster left
    empty is re-seeded with the point farthest from its medoid.
    ``max_iters=0`` returns the initial assignment.
    """
    if not 1 <= k <= ds.n:
        raise UsageError(f"k must lie in [1, {ds.n}], got {k}")
    X = ds.kernel_points
    metric = ds.metric.kernel_code
    rng = np.random.default_rng(seed)
    medoids = np.sort(rng.choice(ds.n, size=k, replace=False))

    def assign(medoids):
        while True:
            labels, dists = _assign(X, medoids, metric)
            counts = np.bincount(labels, minlength=k)
            empty = np.flatnonzero(counts == 0)
            if len(empty) == 0:
                return labels, dists
            taken = set(medoids.tolist())
            for j in empty:
                far = int(np.argmax(np.where(np.isin(np.arange(ds.n), list(taken)), -1.0, dists)))
                medoids[j] = far
                taken.add(far)

    labels, dists = assign(medoids)
    history = [float(dists.sum())]
    it = 0
    while it < max_iters:
        it += 1
        new = medoids.copy()
        for j in range(k):
            members = np.flatnonzero(labels == j)
            Xm = np.ascontiguousarray(X[members])
            pos, _ = _kernels.medoid_position(Xm, np.ascontiguousarray(Xm.T), metric)
            new[j] = members[pos]
        if np.array_equal(new, medoids):
            break
        medoids = new
        labels, dists = assign(medoids)
        history.append(float(dists.sum()))
    return KMedoidsResult(validate_clustering(ds, labels, k=k) if k >= 2 else None, medoids, history, it)


def k_medoids(ds: Dataset, k: int, seed: int = 0, max_iters: int = 100) -> ClusteredDataset:
    if k < 2:
        raise UsageError("k-medoids here produces clusterings for evaluation; k must be >= 2")
    return k_medoids_trace(ds, k, seed, max_iters).clustering


def exact_reference(cd: ClusteredDataset) -> float:
    """Exact silhouette, via centroid pruning when the metric allows it."""
    if cd.metric in (Metric.EUCLIDEAN, Metric.MANHATTAN):
        return silhouette_fs(cd).overall
    return silhouette_exact(cd).overall


@dataclass
class ExperimentConfig:
    source: SyntheticSpec | Dataset
    k_values: list = field(default_factory=lambda: list(range(2, 11)))
    t_values: list = field(default_factory=lambda: [64, 256, 1024])
    repetitions: int = 100
    strategies: list = field(default_factory=lambda: ["pps", "uniform"])
    seed_base: int = 0
    delta: float = 0.1
    kmedoids_seed: int = 0
    kmedoids_iters: int = 100
    jobs: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise UsageError("repetitions must be >= 1")

    def dataset(self) -> Dataset:
        if isinstance(self.source, Dataset):
            return self.source
        return generate_synthetic(self.source)


@dataclass
class ClusteringCase:
    k: int
    clustering: ClusteredDataset
    exact: float
    simplified: float


def prepare_cases(config: ExperimentConfig) -> dict:
    ds = config.dataset()
    cases = {}
    for k in config.k_values:
        cd = k_medoids(ds, k, seed=config.kmedoids_seed, max_iters=config.kmedoids_iters)
        cases[k] = ClusteringCase(k, cd, exact_reference(cd), simplified_silhouette(cd))
    return cases


def repetition_seed(seed_base: int, k: int, rep: int) -> int:
    return int(np.random.SeedSequence([seed_base, k, rep]).generate_state(1, np.uint64)[0])


def run_estimates(config: ExperimentConfig, cases: dict, t_values=None, strategies=None) -> dict:
    """Estimates for every (k, t, strategy), one per repetition."""
    t_values = config.t_values if t_values is None else t_values
    strategies = config.strategies if strategies is None else strategies
    out = {}
    for k, case in cases.items():
        for t in t_values:
            params = EstimationParams(t=t, delta=config.delta)
            for strategy in strategies:

                def one(rep, case=case, params=params, strategy=strategy, k=k):
                    seed = repetition_seed(config.seed_base, k, rep)
                    return estimate_silhouette(case.clustering, params, strategy, seed).overall

                reps = range(config.repetitions)
                if config.jobs > 1:
                    with ThreadPoolExecutor(config.jobs) as pool:
                        values = list(pool.map(one, reps))
                else:
                    values = [one(r) for r in reps]
                out[(k, t, strategy)] = np.array(values)
    return out


def error_table(config: ExperimentConfig, cases: dict | None = None, estimates: dict | None = None) -> list[dict]:
    """Max/avg absolute error and variance of the estimates per (k, t, strategy)."""
    cases = prepare_cases(config) if cases is None else cases
    estimates = run_estimates(config, cases) if estimates is None else estimates
    rows = []
    for (k, t, strategy), values in sorted(estimates.items()):
        case = cases[k]
        err = np.abs(values - case.exact)
        rows.append(
            {
                "k": k,
                "t": t,
                "strategy": strategy,
                "exact": case.exact,
                "mean_estimate": float(values.mean()),
                "max_abs_err": float(err.max()),
                "avg_abs_err": float(err.mean()),
                "variance": float(values.var(ddof=1)) if len(values) > 1 else 0.0,
                "simplified": case.simplified,
                "simplified_abs_err": abs(case.simplified - case.exact),
            }
        )
    return rows


def _best_k(ks, values) -> int:
    # np.argmax returns the first maximum, i.e. the smaller k on ties
    return ks[int(np.argmax(values))]


def k_selection(config: ExperimentConfig, cases: dict | None = None, estimates: dict | None = None) -> list[dict]:
    """Share of repetitions whose best k over [2, l] matches the exact best k."""
    cases = prepare_cases(config) if cases is None else cases
    estimates = run_estimates(config, cases) if estimates is None else estimates
    ks = sorted(cases)
    combos = sorted({(t, s) for (_, t, s) in estimates})
    rows = []
    for t, strategy in combos:
        for hi in ks[1:]:
            rng_ks = [k for k in ks if k <= hi]
            truth = _best_k(rng_ks, [cases[k].exact for k in rng_ks])
            est = np.stack([estimates[(k, t, strategy)] for k in rng_ks])
            picks = [_best_k(rng_ks, est[:, r]) for r in range(est.shape[1])]
            rows.append(
                {
                    "range": f"{rng_ks[0]}-{hi}",
                    "t": t,
                    "strategy": strategy,
                    "exact_best_k": truth,
                    "agreement": float(np.mean([p == truth for p in picks])),
                }
            )
    return rows


def scalability_run(
    n_values, w_values, t: int = 64, k: int = 5, strategy: str = "pps", repeats: int = 5, seed: int = 0
) -> list[dict]:
    """Median pipeline wall time per (n, w).

    Clusterings are the nearest-of-k-random-points assignment (k-medoids with
    no update step); refining medoids at these sizes costs far more than the
    estimate being timed.
    """
    rows = []
    params = EstimationParams(t=t)
    for n in n_values:
        ds = generate_synthetic(SyntheticSpec(n=int(n), seed=seed))
        cd = k_medoids(ds, k, seed=seed, max_iters=0)
        for w in w_values:
            times = []
            for rep in range(repeats):
                start = time.perf_counter()
                run_pipeline(cd, params, strategy, seed + rep, int(w))
                times.append(time.perf_counter() - start)
            rows.append({"n": int(n), "w": int(w), "wall_time": statistics.median(times), "times": times})
        del cd, ds
    return rows


def write_csv(rows: list[dict], path) -> None:
    if not rows:
        open(path, "w").close()
        return
    fields = [k for k in rows[0] if not isinstance(rows[0][k], (list, dict))]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
