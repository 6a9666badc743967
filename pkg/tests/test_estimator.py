import math

import numpy as np
import pytest

from ppsilhouette import (
    Dataset,
    EstimationParams,
    UsageError,
    build_plan,
    cohesion_separation_exact,
    estimate_cohesion_separation,
    estimate_silhouette,
    silhouette_exact,
    simplified_silhouette,
    validate_clustering,
    w_hat,
    w_sum,
)
from ppsilhouette.bench import SyntheticSpec, generate_synthetic, k_medoids
from ppsilhouette.core import Metric
from ppsilhouette.estimator import estimated_sums
from ppsilhouette.exact import cluster_sums
from ppsilhouette.sampling import PHASE_FINAL, ClusterSample, keyed_uniform

from conftest import random_instance


def line_cluster():
    return validate_clustering(Dataset([[0.0], [1.0], [2.0], [100.0], [500.0]]), [0, 0, 0, 0, 1])


def sample_of(cd, j, probabilities, drawn):
    members = cd.members[j]
    return ClusterSample(j, "pps", members, np.asarray(probabilities, float), np.asarray(drawn, bool))


def test_w_hat_full_inclusion_equals_w_sum():
    cd = line_cluster()
    full = sample_of(cd, 0, [1, 1, 1, 1], [True] * 4)
    for e in range(cd.n):
        assert w_hat(cd, e, full) == pytest.approx(w_sum(cd, e, 0), rel=1e-12)


def test_w_hat_hand_example():
    cd = line_cluster()
    # drawn {1 (p = 0.5), 100 (p = 1.0)}, query the point at 0
    sample = sample_of(cd, 0, [0.5, 0.5, 0.5, 1.0], [False, True, False, True])
    assert w_hat(cd, 0, sample) == 102.0
    # the query's own term is zero whatever its probability
    with_self = sample_of(cd, 0, [0.01, 0.5, 0.5, 1.0], [True, True, False, True])
    assert w_hat(cd, 0, with_self) == 102.0


def test_w_hat_unbiased():
    rng = np.random.default_rng(4)
    cd = validate_clustering(Dataset(rng.exponential(size=(120, 2))), np.arange(120) % 2)
    plan = build_plan(cd, EstimationParams(t=10), "pps", seed=0)
    cs = plan.per_cluster[1]
    e, j = 0, 1
    d = np.linalg.norm(cd.dataset.points[cs.members] - cd.dataset.points[e], axis=1)
    values = []
    for seed in range(10000):
        drawn = keyed_uniform(seed, PHASE_FINAL, j, cs.members) < cs.probabilities
        values.append(float(np.sum(d[drawn] / cs.probabilities[drawn])))
    values = np.array(values)
    # spot-check the kernel path against the vectorized estimate
    for seed in range(5):
        drawn = keyed_uniform(seed, PHASE_FINAL, j, cs.members) < cs.probabilities
        assert w_hat(cd, e, sample_of(cd, j, cs.probabilities, drawn)) == pytest.approx(values[seed], rel=1e-12)
    se = values.std(ddof=1) / math.sqrt(len(values))
    assert abs(values.mean() - w_sum(cd, e, j)) <= 4 * se


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("strategy", ["pps", "uniform"])
def test_full_inclusion_reproduces_exact(seed, strategy):
    rng = np.random.default_rng(seed)
    cd = random_instance(rng, n_range=(10, 200))
    est = estimate_silhouette(cd, EstimationParams(t=int(cd.sizes.max())), strategy, seed=seed)
    assert est.overall == pytest.approx(silhouette_exact(cd).overall, rel=1e-9, abs=1e-12)


def test_estimate_invariants():
    rng = np.random.default_rng(9)
    cd = random_instance(rng, n_range=(300, 400), k_range=(3, 5))
    est = estimate_silhouette(cd, EstimationParams(t=20), "pps", seed=1, per_point=True)
    s = est.per_point.s
    assert np.all((s >= -1) & (s <= 1))
    assert est.overall == pytest.approx(s.mean(), abs=1e-15)
    assert np.all(est.per_point.a >= 0) and np.all(est.per_point.b >= 0)
    plan = est.plan
    s0 = sum(len(x) for x in plan.initial_samples)
    assert est.distance_evals <= cd.n * sum(est.plan_summary) + cd.n * s0
    assert est.plan_summary == plan.sample_sizes
    assert estimate_silhouette(cd, EstimationParams(t=20), "pps", seed=1).overall == est.overall
    assert estimate_silhouette(cd, EstimationParams(t=20), "pps", seed=1).per_point is None


def test_singletons_and_duplicates():
    cd = validate_clustering(Dataset([[0.0], [0.0], [0.0], [5.0]]), [0, 0, 1, 1])
    est = estimate_silhouette(cd, EstimationParams(t=1), "uniform", seed=0, per_point=True)
    assert np.all(np.isfinite(est.per_point.s))
    single = validate_clustering(Dataset([[0.0], [1.0], [7.0]]), [0, 0, 1])
    est = estimate_silhouette(single, EstimationParams(t=1), "pps", seed=0, per_point=True)
    assert est.per_point.s[2] == 0.0


def test_relative_error_concentration():
    ds = generate_synthetic(SyntheticSpec(n=2000, seed=0))
    cd = k_medoids(ds, 5, seed=0)
    W = cluster_sums(cd)
    ok = W > 0
    for t in (1024, 256):
        for seed in range(3):
            plan = build_plan(cd, EstimationParams(t=t), "pps", seed=seed)
            rel = np.abs(estimated_sums(cd, plan) - W)[ok] / W[ok]
            assert np.mean(rel > 0.1) < 0.05


def test_simplified_examples(ab):
    assert simplified_silhouette(ab) == pytest.approx(1 - 0.5 / math.sqrt(100.25), rel=1e-12)
    assert simplified_silhouette(ab) == pytest.approx(0.95006, abs=1e-5)
    assert simplified_silhouette(ab, "squared") == pytest.approx(1 - 0.25 / 100.25, rel=1e-12)
    singles = validate_clustering(Dataset([[0.0, 0.0], [3.0, 1.0], [-2.0, 5.0]]), [0, 1, 2])
    assert simplified_silhouette(singles) == 1.0
    with pytest.raises(UsageError):
        simplified_silhouette(ab, "cubed")


def test_simplified_cosine_zero_centroid():
    cd = validate_clustering(Dataset([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]], "cosine"), [0, 0, 1])
    with pytest.raises(UsageError):
        simplified_silhouette(cd)


def test_cohesion_separation_estimates(ab):
    coh, sep = estimate_cohesion_separation(ab, EstimationParams(t=2), seed=0)
    assert coh == 1.0
    assert sep == pytest.approx(10.024938, abs=1e-6)
    rng = np.random.default_rng(2)
    cd = random_instance(rng, n_range=(50, 150), metrics=[Metric.MANHATTAN])
    exact = cohesion_separation_exact(cd)
    coh, sep = estimate_cohesion_separation(cd, EstimationParams(t=int(cd.sizes.max())), seed=3)
    assert coh == pytest.approx(exact.cohesion, rel=1e-9)
    assert sep == pytest.approx(exact.separation, rel=1e-9)
