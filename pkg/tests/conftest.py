import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.spatial.distance import cdist

from ppsilhouette import Dataset, Metric, validate_clustering
from ppsilhouette.bench import ClusteringCase, SyntheticSpec, exact_reference, generate_synthetic, k_medoids
from ppsilhouette.estimator import simplified_silhouette

settings.register_profile(
    "repo", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

SCIPY_NAMES = {
    Metric.EUCLIDEAN: "euclidean",
    Metric.SQUARED_EUCLIDEAN: "sqeuclidean",
    Metric.MANHATTAN: "cityblock",
    Metric.COSINE: "cosine",
}
ALL_METRICS = list(SCIPY_NAMES)


def brute_distances(X, Y, metric):
    return cdist(np.asarray(X, float), np.asarray(Y, float), SCIPY_NAMES[Metric.parse(metric)])


def brute_silhouette(X, labels, metric):
    """Silhouette straight from the definition on a full scipy distance matrix."""
    X = np.asarray(X, float)
    labels = np.unique(np.asarray(labels), return_inverse=True)[1].reshape(-1)
    D = brute_distances(X, X, metric)
    k = labels.max() + 1
    n = len(X)
    s = np.zeros(n)
    a = np.zeros(n)
    b = np.zeros(n)
    for i in range(n):
        own = labels == labels[i]
        size = own.sum()
        if size == 1:
            continue
        a[i] = D[i, own].sum() / (size - 1)
        b[i] = min(D[i, labels == j].mean() for j in range(k) if j != labels[i])
        m = max(a[i], b[i])
        s[i] = 0.0 if m == 0 else (b[i] - a[i]) / m
    return float(s.mean()), a, b, s


def brute_cohesion_separation(X, labels, metric):
    """Average over explicitly enumerated unordered pairs."""
    X = np.asarray(X, float)
    D = brute_distances(X, X, metric)
    n = len(X)
    intra = inter = 0.0
    n_intra = n_inter = 0
    for i in range(n):
        for j in range(i + 1, n):
            if labels[i] == labels[j]:
                intra += D[i, j]
                n_intra += 1
            else:
                inter += D[i, j]
                n_inter += 1
    return intra / n_intra, inter / n_inter, n_intra, n_inter


def random_instance(rng, n_range=(20, 500), k_range=(2, 8), metrics=ALL_METRICS, d_range=(1, 6)):
    """Gaussian blobs plus noise with a random metric; every cluster non-empty."""
    n = int(rng.integers(*n_range, endpoint=True))
    k = int(rng.integers(k_range[0], min(k_range[1], n), endpoint=True))
    d = int(rng.integers(*d_range, endpoint=True))
    metric = metrics[int(rng.integers(len(metrics)))]
    centers = rng.normal(scale=4.0, size=(k, d))
    labels = rng.integers(0, k, n)
    labels[:k] = np.arange(k)
    X = centers[labels] + rng.normal(size=(n, d))
    if metric is Metric.COSINE:
        X += 0.1 * np.sign(X) + (X == 0)
    return validate_clustering(Dataset(X, metric), labels)


@pytest.fixture
def ab_points():
    return np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])


@pytest.fixture
def ab(ab_points):
    return validate_clustering(Dataset(ab_points, "euclidean"), [0, 0, 1, 1])


@pytest.fixture(scope="session")
def synthetic_cases():
    """k-medoids clusterings of the 20000-point ball-plus-outliers dataset, k = 2..10."""
    ds = generate_synthetic(SyntheticSpec(n=20000, seed=0))
    cases = {}
    for k in range(2, 11):
        cd = k_medoids(ds, k, seed=0)
        cases[k] = ClusteringCase(k, cd, exact_reference(cd), simplified_silhouette(cd))
    return cases


@pytest.fixture(scope="session")
def acceptance_log(request):
    lines = []
    request.config._acceptance_lines = lines
    return lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
