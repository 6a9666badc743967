"""Command-line interface.

Exit codes: 0 success, 2 malformed input or invalid arguments, 3 invalid
clustering, 4 resource limit exceeded, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import bench
from .core import Dataset, Metric, UsageError, ValidationError, validate_clustering
from .engine import ResourceError, run_pipeline
from .estimator import estimate_silhouette, simplified_silhouette
from .exact import silhouette_exact, silhouette_fs, silhouette_sq_euclidean_closed_form
from .report import build_report, dumps
from .sampling import EstimationParams

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_RESOURCE = 4
EXIT_IO = 5

DEFAULT_SEED = 20200
ALGORITHMS = ("pps", "uniform", "exact", "fs", "simplified", "sq-exact")
METRIC_CHOICES = ("euclidean", "sqeuclidean", "manhattan", "cosine")


class InputError(Exception):
    """Malformed input file; carries the offending line number."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_table(path) -> tuple[list[str] | None, np.ndarray]:
    """Numeric CSV with an optional header row (detected by a non-numeric cell)."""
    header = None
    rows = []
    width = None
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row]
            if not cells or all(c == "" for c in cells):
                continue
            if line_no == 1 and not all(_is_number(c) for c in cells):
                header = cells
                width = len(cells)
                continue
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise InputError(path, line_no, f"expected {width} columns, found {len(cells)}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(c for c in cells if not _is_number(c))
                raise InputError(path, line_no, f"non-numeric value {bad!r}") from None
    if not rows:
        raise InputError(path, 1, "no data rows")
    return header, np.array(rows, dtype=np.float64)


def _label_column(spec: str | None, header, width: int) -> int:
    if spec is None:
        return width - 1
    if header is not None and spec in header:
        return header.index(spec)
    try:
        col = int(spec)
    except ValueError:
        raise UsageError(f"unknown label column {spec!r}") from None
    if not -width <= col < width:
        raise UsageError(f"label column {col} out of range for {width} columns")
    return col % width


def load_labeled(path, labels_col=None, labels_file=None) -> tuple[np.ndarray, np.ndarray]:
    header, table = read_table(path)
    if labels_file is not None:
        _, lab = read_table(labels_file)
        if lab.shape[1] != 1:
            raise InputError(labels_file, 1, "labels file must have exactly one column")
        return table, lab[:, 0]
    if table.shape[1] < 2:
        raise ValidationError("input needs at least one coordinate column besides the labels")
    col = _label_column(labels_col, header, table.shape[1])
    return np.delete(table, col, axis=1), table[:, col]


def _int_list(text: str) -> list[int]:
    """Parse '2..10', '64,256' or '1e6'."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(_count(lo), _count(hi) + 1))
        else:
            out.append(_count(part))
    return out


def _count(text: str) -> int:
    value = float(text)
    if value != int(value) or value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return int(value)


def _positive(text: str) -> int:
    value = _count(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


@dataclass
class CliConfig:
    input: str
    labels_col: str | None
    labels_file: str | None
    metric: Metric
    algo: str
    t: int | None
    epsilon: float | None
    delta: float
    c: float | None
    seed: int
    workers: int | None
    memory_cap: int | None
    per_point: bool
    output: str | None
    quiet: bool
    with_exact: bool

    @classmethod
    def from_args(cls, args) -> "CliConfig":
        if args.algo in ("pps", "uniform"):
            if (args.t is None) == (args.epsilon is None):
                raise UsageError(f"--algo {args.algo} needs exactly one of --t or --epsilon")
        if args.memory_cap is not None and args.workers is None:
            raise UsageError("--memory-cap applies to pipeline runs; add --workers")
        if args.c is not None and args.epsilon is None:
            raise UsageError("--c only applies together with --epsilon")
        if args.metric is None:
            metric = Metric.SQUARED_EUCLIDEAN if args.algo == "sq-exact" else Metric.EUCLIDEAN
        else:
            metric = Metric.parse(args.metric)
        return cls(
            args.input,
            args.labels_col,
            args.labels_file,
            metric,
            args.algo,
            args.t,
            args.epsilon,
            args.delta,
            args.c,
            args.seed,
            args.workers,
            args.memory_cap,
            args.per_point,
            args.output,
            args.quiet,
            args.with_exact,
        )


def cmd_evaluate(cfg: CliConfig) -> dict:
    points, labels = load_labeled(cfg.input, cfg.labels_col, cfg.labels_file)
    cd = validate_clustering(Dataset(points, cfg.metric), labels)
    sizes = [int(s) for s in cd.sizes]
    extra = {}
    t = delta = seed = None
    per_point = None
    start = time.perf_counter()
    if cfg.algo in ("pps", "uniform"):
        if cfg.t is not None:
            params = EstimationParams(t=cfg.t, delta=cfg.delta)
        else:
            c = 1.0 if cfg.c is None else cfg.c
            params = EstimationParams.from_accuracy(cd.n, cd.k, cfg.epsilon, cfg.delta, c)
        t, delta, seed = params.t, params.delta, cfg.seed
        extra.update(epsilon=params.epsilon, c=params.c)
        if cfg.workers is not None:
            est, stats = run_pipeline(
                cd, params, cfg.algo, cfg.seed, cfg.workers, memory_cap=cfg.memory_cap, per_point=cfg.per_point
            )
            extra.update(workers=cfg.workers, rounds=[st.to_dict() for st in stats])
        else:
            est = estimate_silhouette(cd, params, cfg.algo, cfg.seed, per_point=cfg.per_point)
            extra.update(fallback_clusters=list(est.plan.fallbacks))
        overall, evals, sizes, per_point = est.overall, est.distance_evals, est.plan_summary, est.per_point
    elif cfg.algo == "exact":
        res = silhouette_exact(cd)
        overall, evals, per_point = res.overall, cd.n * cd.n, res.per_point
    elif cfg.algo == "fs":
        res = silhouette_fs(cd)
        overall, evals = res.overall, res.distance_evals
    elif cfg.algo == "sq-exact":
        overall, evals = silhouette_sq_euclidean_closed_form(cd), cd.n * cd.k
    else:
        overall, evals = simplified_silhouette(cd), cd.n * cd.k
    elapsed = (time.perf_counter() - start) * 1000.0
    if cfg.per_point and per_point is not None:
        extra["per_point"] = {"a": per_point.a.tolist(), "b": per_point.b.tolist(), "s": per_point.s.tolist()}
    elif cfg.per_point:
        print(f"note: --algo {cfg.algo} does not produce per-point values", file=sys.stderr)
    exact = bench.exact_reference(cd) if cfg.with_exact else None
    return build_report(
        algorithm=cfg.algo,
        metric=cd.metric.value,
        n=cd.n,
        k=cd.k,
        t=t,
        delta=delta,
        seed=seed,
        overall=overall,
        exact=exact,
        distance_evals=evals,
        wall_time_ms=elapsed,
        per_cluster_sample_sizes=sizes,
        **extra,
    )


def cmd_generate(args) -> None:
    ds = bench.generate_synthetic(bench.SyntheticSpec(n=args.n, seed=args.seed))
    table = ds.points
    fmt = ["%.17g"] * ds.d
    if args.cluster_with_kmedoids is not None:
        cd = bench.k_medoids(ds, args.cluster_with_kmedoids, seed=args.seed, max_iters=args.kmedoids_iters)
        table = np.column_stack([ds.points, cd.labels])
        fmt.append("%d")
    out = sys.stdout if args.output in (None, "-") else args.output
    np.savetxt(out, table, fmt=fmt, delimiter=",")


def _experiment_source(args):
    if args.input is not None:
        _, table = read_table(args.input)
        return Dataset(table, Metric.parse(args.metric))
    return bench.SyntheticSpec(n=args.n, seed=args.data_seed)


def _print_rows(rows, keys):
    print(",".join(keys))
    for row in rows:
        print(",".join(format(row[k], ".6g") if isinstance(row[k], float) else str(row[k]) for k in keys))


def cmd_experiment(args) -> list[dict]:
    if args.kind == "scalability":
        rows = bench.scalability_run(args.n, args.w, t=args.t[0], k=args.k, strategy=args.strategy,
                                     repeats=args.repeats, seed=args.seed)
        keys = ["n", "w", "wall_time"]
    else:
        ks = args.k if args.kind == "error-table" else args.range
        if min(ks) < 2:
            raise UsageError("k values must be >= 2")
        config = bench.ExperimentConfig(
            source=_experiment_source(args),
            k_values=sorted(set(ks)),
            t_values=args.t,
            repetitions=args.reps,
            strategies=args.strategies.split(","),
            seed_base=args.seed,
            delta=args.delta,
            kmedoids_seed=args.seed,
            kmedoids_iters=args.kmedoids_iters,
            jobs=args.jobs,
        )
        cases = bench.prepare_cases(config)
        estimates = bench.run_estimates(config, cases)
        if args.kind == "error-table":
            rows = bench.error_table(config, cases, estimates)
            keys = ["k", "t", "strategy", "exact", "max_abs_err", "avg_abs_err", "variance", "simplified_abs_err"]
        else:
            rows = bench.k_selection(config, cases, estimates)
            keys = ["range", "t", "strategy", "exact_best_k", "agreement"]
    if args.output:
        bench.write_csv(rows, args.output)
    if args.json:
        bench.write_json({"experiment": args.kind, "rows": rows}, args.json)
    if not args.quiet:
        _print_rows(rows, keys)
    return rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppsilhouette", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("evaluate", help="evaluate a labeled CSV")
    ev.add_argument("--input", required=True)
    ev.add_argument("--labels-col", help="label column index or header name (default: last)")
    ev.add_argument("--labels-file", help="separate file with one label per row")
    ev.add_argument("--metric", choices=METRIC_CHOICES)
    ev.add_argument("--algo", choices=ALGORITHMS, default="pps")
    ev.add_argument("--t", type=_positive)
    ev.add_argument("--epsilon", type=float)
    ev.add_argument("--c", type=float)
    ev.add_argument("--delta", type=float, default=0.1)
    ev.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ev.add_argument("--workers", type=_positive, help="run the multi-round pipeline on this many workers")
    ev.add_argument("--memory-cap", type=_positive, help="per-worker memory budget in pairs (pipeline only)")
    ev.add_argument("--per-point", action="store_true")
    ev.add_argument("--with-exact", action="store_true", help="also compute the exact value and the error")
    ev.add_argument("--output")
    ev.add_argument("--quiet", action="store_true")

    gen = sub.add_parser("generate", help="write the synthetic ball-plus-outliers dataset")
    gen.add_argument("--n", type=_positive, required=True)
    gen.add_argument("--seed", type=int, default=DEFAULT_SEED)
    gen.add_argument("--cluster-with-kmedoids", type=_positive, metavar="K")
    gen.add_argument("--kmedoids-iters", type=_count, default=100)
    gen.add_argument("--output")
    gen.add_argument("--quiet", action="store_true")

    ex = sub.add_parser("experiment", help="run an experiment table")
    ex.add_argument("kind", choices=("error-table", "k-selection", "scalability"))
    ex.add_argument("--input", help="unlabeled CSV instead of the synthetic dataset")
    ex.add_argument("--metric", choices=METRIC_CHOICES, default="euclidean")
    ex.add_argument("--n", type=_int_list, default=None)
    ex.add_argument("--data-seed", type=int, default=0)
    ex.add_argument("--k", type=_int_list, default=None)
    ex.add_argument("--range", type=_int_list, default="2..10")
    ex.add_argument("--t", type=_int_list, default=None)
    ex.add_argument("--w", type=_int_list, default="1,2,4")
    ex.add_argument("--reps", type=_positive, default=100)
    ex.add_argument("--repeats", type=_positive, default=5)
    ex.add_argument("--strategies", default="pps,uniform")
    ex.add_argument("--strategy", default="pps")
    ex.add_argument("--delta", type=float, default=0.1)
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--jobs", type=_positive, default=1)
    ex.add_argument("--kmedoids-iters", type=_count, default=100)
    ex.add_argument("--output", help="CSV path")
    ex.add_argument("--json", help="JSON summary path")
    ex.add_argument("--quiet", action="store_true")
    return parser


def _finish_experiment_args(args):
    if args.kind == "scalability":
        args.n = args.n or [10**6]
        args.t = args.t or [64]
        args.k = 5 if args.k is None else args.k[0]
    else:
        args.n = (args.n or [20000])[0]
        args.t = args.t or ([64, 256, 1024] if args.kind == "error-table" else [64])
        args.k = args.k or list(range(2, 11))
        for name in args.strategies.split(","):
            if name not in ("pps", "uniform"):
                raise UsageError(f"unknown strategy {name!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "evaluate":
            report = cmd_evaluate(CliConfig.from_args(args))
            text = dumps(report)
            if args.output:
                with open(args.output, "w") as fh:
                    fh.write(text + "\n")
            print(text)
            if not args.quiet:
                print(f"{report['algorithm']}: overall = {report['overall']:.6f}", file=sys.stderr)
        elif args.command == "generate":
            cmd_generate(args)
        else:
            _finish_experiment_args(args)
            cmd_experiment(args)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as err:
        print(f"error: invalid clustering: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except (ResourceError, MemoryError) as err:
        print(f"error: resource limit: {err}", file=sys.stderr)
        return EXIT_RESOURCE
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
