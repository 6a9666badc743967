"""Compiled distance kernels.

Every kernel is serial and releases the GIL, so concurrency is obtained by
running several kernels from a thread pool (see ``engine``). Point sets that
are summed over are passed transposed (d x m) so that distance evaluation
vectorizes; sums then run over a buffer with eight Kahan lanes in a fixed
order, which keeps every result independent of how work is split up.
"""

import math

import numpy as np
from numba import njit

EUCLIDEAN = 0
SQUARED_EUCLIDEAN = 1
MANHATTAN = 2
# cosine distance evaluated as 0.5 * ||u - v||^2 on unit vectors
COSINE_UNIT = 3

LANES = 8


@njit(cache=True, nogil=True)
def _dist(X, i, Y, j, metric):
    d = X.shape[1]
    s = 0.0
    if metric == MANHATTAN:
        for c in range(d):
            s += abs(X[i, c] - Y[j, c])
        return s
    for c in range(d):
        diff = X[i, c] - Y[j, c]
        s += diff * diff
    if metric == EUCLIDEAN:
        return math.sqrt(s)
    if metric == COSINE_UNIT:
        return 0.5 * s
    return s


@njit(cache=True, nogil=True)
def _fill(x, ST, lo, hi, metric, buf):
    """buf[lo:hi] = distances from point x to columns lo..hi-1 of ST."""
    for s in range(lo, hi):
        buf[s] = 0.0
    if metric == MANHATTAN:
        for c in range(ST.shape[0]):
            xc = x[c]
            row = ST[c]
            for s in range(lo, hi):
                buf[s] += abs(xc - row[s])
        return
    for c in range(ST.shape[0]):
        xc = x[c]
        row = ST[c]
        for s in range(lo, hi):
            y = xc - row[s]
            buf[s] += y * y
    if metric == EUCLIDEAN:
        for s in range(lo, hi):
            buf[s] = math.sqrt(buf[s])
    elif metric == COSINE_UNIT:
        for s in range(lo, hi):
            buf[s] = 0.5 * buf[s]


@njit(cache=True, nogil=True)
def _lane_sum(buf, lo, hi, acc, comp):
    """Compensated sum of buf[lo:hi]; element lo + i goes to lane i % LANES."""
    for l in range(LANES):
        acc[l] = 0.0
        comp[l] = 0.0
    s = lo
    while s + LANES <= hi:
        for l in range(LANES):
            y = buf[s + l] - comp[l]
            t = acc[l] + y
            comp[l] = (t - acc[l]) - y
            acc[l] = t
        s += LANES
    l = 0
    while s < hi:
        y = buf[s] - comp[l]
        t = acc[l] + y
        comp[l] = (t - acc[l]) - y
        acc[l] = t
        s += 1
        l += 1
    total = 0.0
    for l in range(LANES):
        total += acc[l] - comp[l]
    return total


@njit(cache=True, nogil=True)
def distance_block(A, B, metric):
    out = np.empty((A.shape[0], B.shape[0]))
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            out[i, j] = _dist(A, i, B, j, metric)
    return out


@njit(cache=True, nogil=True)
def column_sums(D):
    """Kahan-compensated column sums of a 2-D array, rows in order."""
    m, r = D.shape
    out = np.zeros(r)
    comp = np.zeros(r)
    for i in range(m):
        for j in range(r):
            y = D[i, j] - comp[j]
            t = out[j] + y
            comp[j] = (t - out[j]) - y
            out[j] = t
    return out


@njit(cache=True, nogil=True)
def weighted_cluster_sums(Q, ST, weights, offsets, metric):
    """out[q, j] = sum over s in block j of d(Q[q], ST[:, s]) * weights[s].

    Columns of ``ST`` are grouped by cluster; block j spans
    ``offsets[j]:offsets[j+1]``.
    """
    m = Q.shape[0]
    k = offsets.shape[0] - 1
    total = ST.shape[1]
    out = np.zeros((m, k))
    buf = np.empty(total)
    acc = np.empty(LANES)
    comp = np.empty(LANES)
    for q in range(m):
        _fill(Q[q], ST, 0, total, metric, buf)
        for s in range(total):
            buf[s] *= weights[s]
        for j in range(k):
            out[q, j] = _lane_sum(buf, offsets[j], offsets[j + 1], acc, comp)
    return out


@njit(cache=True, nogil=True)
def nearest_center(X, C, metric):
    n = X.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n)
    for i in range(n):
        best = np.inf
        arg = 0
        for c in range(C.shape[0]):
            v = _dist(X, i, C, c, metric)
            if v < best:
                best = v
                arg = c
        labels[i] = arg
        dists[i] = best
    return labels, dists


@njit(cache=True, nogil=True)
def medoid_position(Xm, XmT, metric):
    """Row of Xm minimizing the sum of distances to all rows, and that sum."""
    m = Xm.shape[0]
    best = np.inf
    arg = 0
    buf = np.empty(m)
    acc = np.empty(LANES)
    comp = np.empty(LANES)
    for i in range(m):
        _fill(Xm[i], XmT, 0, m, metric, buf)
        v = _lane_sum(buf, 0, m, acc, comp)
        if v < best:
            best = v
            arg = i
    return arg, best


@njit(cache=True, nogil=True)
def pruned_silhouette_terms(X, ST, offsets, cluster_of_row, centroids, metric):
    """Exact a/b terms with centroid-distance pruning of candidate clusters.

    Row r of ``X`` is the point stored in column r of ``ST`` (every point,
    grouped by cluster, the same layout the exact path sums over, so the
    sums agree bit for bit). A candidate cluster is skipped once its
    centroid distance, a lower bound on the mean distance for convex
    metrics, reaches the best mean found so far. Centroid distances count
    towards the returned number of evaluations.
    """
    n = X.shape[0]
    k = offsets.shape[0] - 1
    a = np.zeros(n)
    b = np.zeros(n)
    skipped = 0
    evals = 0
    cd = np.empty(k)
    buf = np.empty(n)
    acc = np.empty(LANES)
    comp = np.empty(LANES)
    for row in range(n):
        own = cluster_of_row[row]
        lo = offsets[own]
        hi = offsets[own + 1]
        _fill(X[row], ST, lo, hi, metric, buf)
        total = _lane_sum(buf, lo, hi, acc, comp)
        evals += hi - lo + k
        if hi - lo > 1:
            a[row] = total / (hi - lo - 1)
        for j in range(k):
            cd[j] = _dist(X, row, centroids, j, metric)
        order = np.argsort(cd, kind="mergesort")
        best = np.inf
        for idx in range(k):
            j = order[idx]
            if j == own:
                continue
            if cd[j] >= best:
                skipped += 1
                continue
            lo = offsets[j]
            hi = offsets[j + 1]
            _fill(X[row], ST, lo, hi, metric, buf)
            evals += hi - lo
            mean = _lane_sum(buf, lo, hi, acc, comp) / (hi - lo)
            if mean < best:
                best = mean
        b[row] = best
    return a, b, skipped, evals
