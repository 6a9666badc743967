import numpy as np
import pytest

from ppsilhouette import Dataset, EstimationParams, UsageError, estimate_silhouette, validate_clustering
from ppsilhouette.bench import SyntheticSpec, generate_synthetic, k_medoids
from ppsilhouette.engine import (
    KeyValuePair,
    PairBuffer,
    ResourceError,
    RoundStats,
    memory_report,
    partition,
    run_pipeline,
)

from conftest import random_instance


@pytest.fixture(scope="module")
def blobs():
    rng = np.random.default_rng(0)
    return random_instance(rng, n_range=(600, 600), k_range=(4, 4), metrics=["euclidean"])


def test_partition_examples():
    cd = validate_clustering(Dataset(np.arange(10.0)), np.arange(10) % 2)
    assert [len(v) for v in partition(cd, 3)] == [4, 3, 3]
    assert partition(cd, 1)[0].tolist() == list(range(10))
    parts = partition(cd, 10)
    assert all(len(v) == 1 for v in parts)
    assert sorted(np.concatenate(parts).tolist()) == list(range(10))
    for bad in (0, 11):
        with pytest.raises(UsageError):
            partition(cd, bad)


@pytest.mark.parametrize("strategy", ["pps", "uniform"])
def test_single_worker_equals_sequential(blobs, strategy):
    params = EstimationParams(t=32)
    seq = estimate_silhouette(blobs, params, strategy, seed=4, per_point=True)
    est, _ = run_pipeline(blobs, params, strategy, seed=4, w=1, per_point=True)
    assert est.overall == seq.overall
    np.testing.assert_array_equal(est.per_point.s, seq.per_point.s)
    assert est.plan_summary == seq.plan_summary


@pytest.mark.parametrize("strategy", ["pps", "uniform"])
def test_worker_counts_agree(blobs, strategy):
    params = EstimationParams(t=32)
    seq = estimate_silhouette(blobs, params, strategy, seed=8, per_point=True)
    for w in (2, 4, 8):
        est, stats = run_pipeline(blobs, params, strategy, seed=8, w=w, per_point=True)
        assert abs(est.overall - seq.overall) <= 1e-12
        np.testing.assert_allclose(est.per_point.s, seq.per_point.s, rtol=0, atol=1e-12)
        assert est.plan_summary == seq.plan_summary
        for st in stats:
            assert st.aggregate_memory <= w * st.max_local_memory


def test_broadcast_accounting(blobs):
    params = EstimationParams(t=32)
    drawn = None
    round3_local = []
    for w in (1, 2, 4):
        est, stats = run_pipeline(blobs, params, "pps", seed=2, w=w)
        r3 = stats[2]
        # the final sample is replicated once per worker
        assert r3.broadcast_pairs == w * sum(est.plan_summary)
        drawn = est.plan_summary if drawn is None else drawn
        assert est.plan_summary == drawn
        round3_local.append(r3.max_local_memory)
    assert round3_local[0] > round3_local[1] > round3_local[2]


def test_round_one_local_memory():
    ds = generate_synthetic(SyntheticSpec(n=100000, seed=0))
    cd = k_medoids(ds, 5, seed=0, max_iters=0)
    w = 4
    est, stats = run_pipeline(cd, EstimationParams(t=64), "pps", seed=0, w=w)
    r1 = stats[0]
    refs = r1.broadcast_pairs // w
    assert r1.max_local_memory == -(-cd.n // w) + refs
    # a few dozen references per cluster: O(k log(nk/delta))
    assert refs <= 10 * cd.k * np.log(cd.n * cd.k / 0.1)
    print(memory_report(stats, w))


def test_resource_error_names_round(blobs):
    with pytest.raises(ResourceError) as info:
        run_pipeline(blobs, EstimationParams(t=32), "pps", seed=0, w=2, memory_cap=100)
    assert info.value.round == 1
    assert "round 1" in str(info.value)


def test_memory_report_checks_bound():
    good = [RoundStats(1, 10, 20, 20, 0, 0.01)]
    assert "M_L" in memory_report(good, 2)
    with pytest.raises(AssertionError):
        memory_report([RoundStats(1, 10, 30, 30, 0, 0.01)], 2)


def test_pair_views():
    buf = PairBuffer("partial", np.array([1, 0]), np.array([5, 6]), np.array([0, 1]), np.array([2.5, 3.0]))
    assert list(buf.pairs()) == [KeyValuePair(1, (5, 0, 2.5, 0)), KeyValuePair(0, (6, 1, 3.0, 0))]
    bcast = PairBuffer("point", None, np.array([7]), np.array([2]), flag=1)
    assert list(bcast.pairs(key=3)) == [KeyValuePair(3, (7, 2, 1))]


def test_rejects_bad_arguments(blobs):
    with pytest.raises(UsageError):
        run_pipeline(blobs, EstimationParams(t=4), "pps", seed=0, w=0)
    with pytest.raises(UsageError):
        run_pipeline(blobs, EstimationParams(t=4), "systematic", seed=0, w=2)
