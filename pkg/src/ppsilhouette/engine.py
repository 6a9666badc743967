"""Four-round MapReduce silhouette estimation on a local pool of workers.

Each round runs w map tasks, a shuffle that groups pairs by key, and w
reduce tasks, with a barrier in between. Pairs travel as columnar buffers;
a broadcast buffer (a pair replicated to every key) is stored once and
charged w times to the shuffle and memory ledgers. The value ``e_i`` of a
pair is carried as the point index into the shared, immutable dataset.

Sampling decisions come from ``sampling.keyed_uniform`` so the pipeline
draws the same samples as the sequential estimator for any w.
"""

from __future__ import annotations

import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import ClusteredDataset, UsageError
from .estimator import SilhouetteEstimate
from .exact import PointSilhouettes, assemble_silhouette
from .sampling import (
    PHASE_FINAL,
    PHASE_INITIAL,
    INITIAL_REDRAWS,
    STRATEGIES,
    EstimationParams,
    initial_draw_index,
    initial_probability,
    keyed_uniform,
    pps_from_ratios,
    resolve_initial_sample,
)


class ResourceError(RuntimeError):
    """A reducer needed more local memory than the configured cap."""

    def __init__(self, round_no: int, needed: int, cap: int):
        super().__init__(f"round {round_no}: reducer needs {needed} pairs, local memory cap is {cap}")
        self.round = round_no
        self.needed = needed
        self.cap = cap


@dataclass(frozen=True)
class KeyValuePair:
    key: int
    value: tuple


@dataclass(frozen=True, eq=False)
class PairBuffer:
    """A batch of pairs with the same record layout.

    ``tag`` names the layout of ``value``:

    - ``point``: (point, cluster, flag)
    - ``partial``: (point, cluster, W, flag)
    - ``prob``: (point, cluster, p)
    - ``sum``: (partial_sum,)

    ``key`` is ``None`` for a broadcast buffer, whose pairs go to every key.
    """

    tag: str
    key: np.ndarray | None
    point: np.ndarray
    cluster: np.ndarray
    value: np.ndarray | None = None
    flag: int = 0

    def __len__(self):
        return len(self.point) if self.tag != "sum" else len(self.value)

    def take(self, idx) -> "PairBuffer":
        return PairBuffer(
            self.tag,
            None if self.key is None else self.key[idx],
            self.point[idx],
            self.cluster[idx],
            None if self.value is None else self.value[idx],
            self.flag,
        )

    def pairs(self, key: int | None = None):
        """Yield the buffer as individual pairs (debugging and tests)."""
        for r in range(len(self)):
            k = key if self.key is None else int(self.key[r])
            if self.tag == "sum":
                yield KeyValuePair(k, (float(self.value[r]),))
                continue
            base = (int(self.point[r]), int(self.cluster[r]))
            if self.tag == "point":
                yield KeyValuePair(k, base + (self.flag,))
            elif self.tag == "partial":
                yield KeyValuePair(k, base + (float(self.value[r]), self.flag))
            else:
                yield KeyValuePair(k, base + (float(self.value[r]),))

    @staticmethod
    def concat(buffers, tag: str, flag: int = 0, keyed: bool = True) -> "PairBuffer":
        buffers = [b for b in buffers if len(b)]
        if not buffers:
            empty = np.empty(0, dtype=np.int64)
            return PairBuffer(tag, empty if keyed else None, empty, empty, np.empty(0), flag)
        return PairBuffer(
            tag,
            np.concatenate([b.key for b in buffers]) if keyed else None,
            np.concatenate([b.point for b in buffers]),
            np.concatenate([b.cluster for b in buffers]),
            None if buffers[0].value is None else np.concatenate([b.value for b in buffers]),
            flag,
        )


@dataclass(frozen=True)
class RoundStats:
    round: int
    max_local_memory: int
    aggregate_memory: int
    shuffle_pairs: int
    broadcast_pairs: int
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "max_local_pairs": self.max_local_memory,
            "aggregate_pairs": self.aggregate_memory,
            "shuffle_pairs": self.shuffle_pairs,
            "broadcast_pairs": self.broadcast_pairs,
            "wall_time_ms": round(self.wall_time * 1000.0, 3),
        }


@dataclass(frozen=True)
class _MapOutput:
    keyed: PairBuffer
    broadcast: PairBuffer | None = None


@dataclass(frozen=True)
class _ReducerInput:
    local: PairBuffer
    broadcast: PairBuffer | None
    broadcast_copies: int


def partition(cd: ClusteredDataset, w: int) -> list[np.ndarray]:
    """Point index sets V_l: point i goes to worker i mod w."""
    if not isinstance(w, (int, np.integer)) or not 1 <= w <= cd.n:
        raise UsageError(f"worker count must lie in [1, {cd.n}], got {w}")
    idx = np.arange(cd.n)
    return [idx[l::w] for l in range(w)]


def _bucket(buf: PairBuffer, w: int) -> list[PairBuffer]:
    order = np.argsort(buf.key.astype(np.int16 if w < 32767 else np.int64), kind="stable")
    counts = np.bincount(buf.key, minlength=w)
    bounds = np.concatenate([[0], np.cumsum(counts)])
    return [buf.take(order[bounds[l] : bounds[l + 1]]) for l in range(w)]


class _Pipeline:
    def __init__(self, cd, params, strategy, seed, w, memory_cap, pool):
        self.cd = cd
        self.params = params
        self.strategy = strategy
        self.seed = int(seed)
        self.w = w
        self.memory_cap = memory_cap
        self.pool = pool
        self.X = cd.dataset.kernel_points
        self.metric = cd.metric.kernel_code
        t = params.t
        self.full = cd.sizes <= t
        self.pps_cluster = (~self.full) & (strategy == "pps")
        self.q0 = np.array([initial_probability(int(m), cd.k, params.delta) for m in cd.sizes])
        self.stats: list[RoundStats] = []
        self.evals = 0
        self._lock = threading.Lock()

    def _count(self, n_evals: int):
        with self._lock:
            self.evals += int(n_evals)

    # -- plumbing ---------------------------------------------------------
    def _parallel(self, fn, items):
        return list(self.pool.map(fn, items))

    def _round(self, round_no, inputs, mapper, reducer):
        start = time.perf_counter()
        mapped = self._parallel(mapper, inputs)
        keyed = [_bucket(m.keyed, self.w) for m in mapped]
        bparts = [m.broadcast for m in mapped if m.broadcast is not None]
        broadcast = None
        if bparts:
            broadcast = PairBuffer.concat(bparts, bparts[0].tag, flag=1, keyed=False)
        reducer_inputs = []
        for l in range(self.w):
            local = PairBuffer.concat([parts[l] for parts in keyed], mapped[0].keyed.tag, keyed=True)
            reducer_inputs.append(_ReducerInput(local, broadcast, self.w))
        loads = [len(r.local) + (0 if r.broadcast is None else len(r.broadcast)) for r in reducer_inputs]
        broadcast_pairs = 0 if broadcast is None else self.w * len(broadcast)
        if self.memory_cap is not None and max(loads) > self.memory_cap:
            raise ResourceError(round_no, max(loads), self.memory_cap)
        outputs = self._parallel(reducer, list(enumerate(reducer_inputs)))
        self.stats.append(
            RoundStats(
                round=round_no,
                max_local_memory=int(max(loads)),
                aggregate_memory=int(sum(loads)),
                shuffle_pairs=int(sum(loads)),
                broadcast_pairs=int(broadcast_pairs),
                wall_time=time.perf_counter() - start,
            )
        )
        return outputs

    def _splits(self, buf: PairBuffer) -> list[PairBuffer]:
        bounds = np.linspace(0, len(buf), self.w + 1).astype(np.int64)
        return [buf.take(slice(bounds[m], bounds[m + 1])) for m in range(self.w)]

    def _rows(self, idx):
        return np.ascontiguousarray(self.X[idx])

    # -- round 1 ----------------------------------------------------------
    def map1(self, buf: PairBuffer) -> _MapOutput:
        keyed = PairBuffer("point", buf.point % self.w, buf.point, buf.cluster)
        # per cluster, the split's points in its earliest non-empty initial
        # draw plus its largest-variate point: enough for every reducer to
        # resolve the cluster's reference set
        chosen = []
        for j in np.flatnonzero(self.pps_cluster):
            pts = buf.point[buf.cluster == j]
            if len(pts) == 0:
                continue
            u = keyed_uniform(self.seed, PHASE_INITIAL, j, pts)
            r = initial_draw_index(u, self.q0[j])
            if r.min() <= INITIAL_REDRAWS:
                chosen.append(pts[r == r.min()])
            chosen.append(pts[[int(np.argmax(u))]])
        pts = np.unique(np.concatenate(chosen)) if chosen else np.empty(0, dtype=np.int64)
        return _MapOutput(keyed, PairBuffer("point", None, pts, self.cd.labels[pts].astype(np.int64), flag=1))

    def _references(self, cand: PairBuffer):
        points, clusters = [], []
        for j in np.unique(cand.cluster):
            pts = cand.point[cand.cluster == j]
            s0 = resolve_initial_sample(pts, keyed_uniform(self.seed, PHASE_INITIAL, j, pts), self.q0[j])
            points.append(s0)
            clusters.append(np.full(len(s0), j, dtype=np.int64))
        if not points:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        return np.concatenate(points), np.concatenate(clusters)

    def reduce1(self, item):
        l, inp = item
        own = inp.local
        ref_point, ref_cluster = self._references(inp.broadcast)
        W = np.zeros(len(ref_point))
        for j in np.unique(ref_cluster):
            r = np.flatnonzero(ref_cluster == j)
            mine = own.point[own.cluster == j]
            if len(mine) == 0:
                continue
            ST = np.ascontiguousarray(self.X[mine].T)
            sums = _kernels.weighted_cluster_sums(
                self._rows(ref_point[r]), ST, np.ones(len(mine)), np.array([0, len(mine)]), self.metric
            )
            W[r] = sums[:, 0]
            self._count(len(r) * len(mine))
        zeros = np.zeros(len(own))
        return (
            PairBuffer("partial", own.key, own.point, own.cluster, zeros, flag=0),
            PairBuffer("partial", np.full(len(ref_point), l), ref_point, ref_cluster, W, flag=1),
        )

    # -- round 2 ----------------------------------------------------------
    def map2(self, outputs) -> _MapOutput:
        own, partial = outputs
        return _MapOutput(own, PairBuffer("partial", None, partial.point, partial.cluster, partial.value, flag=1))

    def reduce2(self, item):
        l, inp = item
        own = inp.local
        parts = inp.broadcast
        cd = self.cd
        t = self.params.t
        # every reference arrives once per source reducer; add its partials
        order = np.lexsort((parts.point, parts.cluster))
        ref_point = parts.point[order].reshape(-1, self.w)[:, 0] if len(parts) else parts.point
        ref_cluster = parts.cluster[order].reshape(-1, self.w)[:, 0] if len(parts) else parts.cluster
        partial_rows = parts.value[order].reshape(-1, self.w) if len(parts) else np.empty((0, self.w))
        W = np.array([math.fsum(row) for row in partial_rows.tolist()])
        p = np.ones(len(own))
        for j in range(cd.k):
            mask = own.cluster == j
            if not np.any(mask) or self.full[j]:
                continue
            size = int(cd.sizes[j])
            r = np.flatnonzero((ref_cluster == j) & (W > 0)) if len(W) else np.empty(0, dtype=np.int64)
            if not self.pps_cluster[j] or len(r) == 0:
                p[mask] = min(1.0, t / size)
                continue
            D = _kernels.distance_block(self._rows(own.point[mask]), self._rows(ref_point[r]), self.metric)
            self._count(D.size)
            p[mask] = pps_from_ratios((D / W[r]).max(axis=1), size, t)
        return PairBuffer("prob", own.key, own.point, own.cluster, p)

    # -- round 3 ----------------------------------------------------------
    def map3(self, buf: PairBuffer) -> _MapOutput:
        keyed = PairBuffer("point", buf.key, buf.point, buf.cluster)
        sel = keyed_uniform(self.seed, PHASE_FINAL, buf.cluster, buf.point) < buf.value
        return _MapOutput(keyed, PairBuffer("prob", None, buf.point[sel], buf.cluster[sel], buf.value[sel], flag=1))

    def reduce3(self, item):
        l, inp = item
        own = inp.local
        sample = inp.broadcast
        cd = self.cd
        order = np.lexsort((sample.point, sample.cluster))
        pts = sample.point[order]
        wts = 1.0 / sample.value[order]
        offsets = np.zeros(cd.k + 1, dtype=np.int64)
        np.cumsum(np.bincount(sample.cluster, minlength=cd.k), out=offsets[1:])
        sums = _kernels.weighted_cluster_sums(
            self._rows(own.point), np.ascontiguousarray(self.X[pts].T), wts, offsets, self.metric
        )
        self._count(len(own) * len(pts))
        per_point = assemble_silhouette(sums, own.cluster, cd.sizes)
        partial = math.fsum(per_point.s.tolist())
        zero = np.zeros(1, dtype=np.int64)
        drawn = np.diff(offsets)
        return PairBuffer("sum", zero, zero, zero, np.array([partial])), own.point, per_point, drawn

    # -- round 4 ----------------------------------------------------------
    def map4(self, buf: PairBuffer) -> _MapOutput:
        return _MapOutput(buf)

    def reduce4(self, item):
        l, inp = item
        if len(inp.local) == 0:
            return None
        return math.fsum(inp.local.value.tolist()) / self.cd.n

    def run(self, keep_points: bool):
        cd = self.cd
        idx = np.arange(cd.n)
        initial = PairBuffer("point", idx, idx, cd.labels.astype(np.int64))
        out1 = self._round(1, self._splits(initial), self.map1, self.reduce1)
        out2 = self._round(2, out1, self.map2, self.reduce2)
        out3 = self._round(3, out2, self.map3, self.reduce3)
        sums = [o[0] for o in out3]
        out4 = self._round(4, sums, self.map4, self.reduce4)
        overall = out4[0]
        drawn = out3[0][3]
        per_point = None
        if keep_points:
            a = np.empty(cd.n)
            b = np.empty(cd.n)
            s = np.empty(cd.n)
            for _, points, pts, _ in out3:
                a[points] = pts.a
                b[points] = pts.b
                s[points] = pts.s
            per_point = PointSilhouettes(a, b, s)
        return SilhouetteEstimate(
            overall=overall,
            plan_summary=[int(x) for x in drawn],
            distance_evals=int(self.evals),
            per_point=per_point,
        )


def run_pipeline(
    cd: ClusteredDataset,
    params: EstimationParams,
    strategy: str = "pps",
    seed: int = 0,
    w: int = 1,
    memory_cap: int | None = None,
    per_point: bool = False,
) -> tuple[SilhouetteEstimate, list[RoundStats]]:
    """Estimate the silhouette with the four-round pipeline on ``w`` workers.

    Raises ``ResourceError`` when a reducer's input exceeds ``memory_cap``
    pairs.
    """
    if strategy not in STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}")
    if cd.k < 2:
        raise UsageError("silhouette needs k >= 2")
    partition(cd, w)
    with ThreadPoolExecutor(max_workers=w) as pool:
        pipe = _Pipeline(cd, params, strategy, seed, int(w), memory_cap, pool)
        estimate = pipe.run(per_point)
    return estimate, pipe.stats


def memory_report(stats: list[RoundStats], w: int) -> str:
    """Per-round local/aggregate memory and shuffle volume as a text table."""
    lines = [f"{'round':>5} {'M_L':>12} {'M_A':>12} {'shuffle':>12} {'broadcast':>12} {'ms':>10}"]
    for st in stats:
        if st.aggregate_memory > w * st.max_local_memory:
            raise AssertionError(f"round {st.round}: aggregate memory exceeds w * local memory")
        lines.append(
            f"{st.round:>5} {st.max_local_memory:>12} {st.aggregate_memory:>12} "
            f"{st.shuffle_pairs:>12} {st.broadcast_pairs:>12} {st.wall_time * 1000:>10.1f}"
        )
    return "\n".join(lines)
