"""Machine-readable silhouette reports."""

from __future__ import annotations

import json

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "SilhouetteReport",
    "type": "object",
    "required": [
        "algorithm",
        "metric",
        "n",
        "k",
        "t",
        "delta",
        "seed",
        "overall",
        "distance_evals",
        "wall_time_ms",
        "per_cluster_sample_sizes",
    ],
    "properties": {
        "algorithm": {"enum": ["pps", "uniform", "exact", "fs", "simplified", "sq-exact"]},
        "metric": {"enum": ["euclidean", "squared_euclidean", "manhattan", "cosine_distance"]},
        "n": {"type": "integer", "minimum": 1},
        "k": {"type": "integer", "minimum": 2},
        "t": {"type": ["integer", "null"], "minimum": 1},
        "delta": {"type": ["number", "null"], "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "seed": {"type": ["integer", "null"]},
        "overall": {"type": "number", "minimum": -1, "maximum": 1},
        "exact": {"type": "number", "minimum": -1, "maximum": 1},
        "abs_error": {"type": "number", "minimum": 0},
        "distance_evals": {"type": "integer", "minimum": 0},
        "wall_time_ms": {"type": "number", "minimum": 0},
        "per_cluster_sample_sizes": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "epsilon": {"type": ["number", "null"]},
        "c": {"type": ["number", "null"]},
        "workers": {"type": ["integer", "null"], "minimum": 1},
        "fallback_clusters": {"type": "array", "items": {"type": "integer"}},
        "per_point": {
            "type": "object",
            "required": ["a", "b", "s"],
            "properties": {k: {"type": "array", "items": {"type": "number"}} for k in ("a", "b", "s")},
        },
        "rounds": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["round", "max_local_pairs", "aggregate_pairs", "shuffle_pairs", "wall_time_ms"],
                "properties": {
                    "round": {"type": "integer", "minimum": 1, "maximum": 4},
                    "max_local_pairs": {"type": "integer", "minimum": 0},
                    "aggregate_pairs": {"type": "integer", "minimum": 0},
                    "shuffle_pairs": {"type": "integer", "minimum": 0},
                    "broadcast_pairs": {"type": "integer", "minimum": 0},
                    "wall_time_ms": {"type": "number", "minimum": 0},
                },
            },
        },
    },
}


def build_report(
    *,
    algorithm: str,
    metric: str,
    n: int,
    k: int,
    overall: float,
    distance_evals: int,
    wall_time_ms: float,
    per_cluster_sample_sizes,
    t: int | None = None,
    delta: float | None = None,
    seed: int | None = None,
    exact: float | None = None,
    **extra,
) -> dict:
    report = {
        "algorithm": algorithm,
        "metric": metric,
        "n": int(n),
        "k": int(k),
        "t": None if t is None else int(t),
        "delta": delta,
        "seed": None if seed is None else int(seed),
        "overall": float(overall),
        "distance_evals": int(distance_evals),
        "wall_time_ms": float(wall_time_ms),
        "per_cluster_sample_sizes": [int(s) for s in per_cluster_sample_sizes],
    }
    if exact is not None:
        report["exact"] = float(exact)
        report["abs_error"] = abs(float(overall) - float(exact))
    report.update({key: value for key, value in extra.items() if value is not None})
    return report


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2)
