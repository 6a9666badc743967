import csv
import json
import shutil
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from ppsilhouette.cli import EXIT_IO, EXIT_PARSE, EXIT_RESOURCE, EXIT_VALIDATION, main
from ppsilhouette.report import REPORT_SCHEMA

AB_CSV = "x,y,label\n0,0,0\n0,1,0\n10,0,1\n10,1,1\n"


@pytest.fixture
def ab_csv(tmp_path):
    path = tmp_path / "ab.csv"
    path.write_text(AB_CSV)
    return path


def evaluate(capsys, *argv):
    code = main(["evaluate", *map(str, argv)])
    out, err = capsys.readouterr()
    assert code == 0, err
    report = json.loads(out)
    jsonschema.validate(report, REPORT_SCHEMA)
    return report


@pytest.mark.parametrize("algo", ["exact", "fs", "pps", "uniform"])
def test_evaluate_ab(capsys, ab_csv, algo):
    extra = ["--t", "1000000"] if algo in ("pps", "uniform") else []
    report = evaluate(capsys, "--input", ab_csv, "--algo", algo, *extra)
    assert report["overall"] == pytest.approx(0.900249, abs=1e-6)
    assert report["n"] == 4 and report["k"] == 2
    assert report["per_cluster_sample_sizes"] == [2, 2]


def test_evaluate_other_algorithms(capsys, ab_csv):
    sq = evaluate(capsys, "--input", ab_csv, "--algo", "sq-exact")
    assert sq["metric"] == "squared_euclidean"
    assert sq["overall"] == pytest.approx(0.99005, abs=1e-5)
    simple = evaluate(capsys, "--input", ab_csv, "--algo", "simplified")
    assert simple["overall"] == pytest.approx(0.95006, abs=1e-5)


def test_pps_large_t_matches_exact(capsys, tmp_path):
    rng = np.random.default_rng(0)
    table = np.column_stack([rng.normal(size=(120, 3)), rng.integers(0, 3, 120)])
    path = tmp_path / "r.csv"
    np.savetxt(path, table, delimiter=",", fmt=["%.17g"] * 3 + ["%d"])
    exact = evaluate(capsys, "--input", path, "--algo", "exact", "--metric", "manhattan")
    pps = evaluate(capsys, "--input", path, "--algo", "pps", "--t", "1000000", "--metric", "manhattan")
    assert abs(pps["overall"] - exact["overall"]) <= 1e-9


@pytest.fixture(scope="module")
def labeled_20k(tmp_path_factory):
    path = tmp_path_factory.mktemp("gen") / "syn.csv"
    assert main(["generate", "--n", "20000", "--seed", "0", "--cluster-with-kmedoids", "5",
                 "--kmedoids-iters", "2", "--output", str(path)]) == 0
    return path


def test_epsilon_sets_t(capsys, labeled_20k):
    report = evaluate(capsys, "--input", labeled_20k, "--algo", "pps", "--epsilon", "0.1", "--delta", "0.1")
    assert report["t"] == 761
    assert report["c"] == 1.0 and report["epsilon"] == 0.1


def test_rerun_is_deterministic(capsys, labeled_20k):
    a = evaluate(capsys, "--input", labeled_20k, "--t", "64", "--seed", "3")
    b = evaluate(capsys, "--input", labeled_20k, "--t", "64", "--seed", "3")
    assert a["overall"] == b["overall"]
    assert a["per_cluster_sample_sizes"] == b["per_cluster_sample_sizes"]


def test_workers_and_exact(capsys, labeled_20k):
    seq = evaluate(capsys, "--input", labeled_20k, "--t", "64", "--seed", "1")
    par = evaluate(capsys, "--input", labeled_20k, "--t", "64", "--seed", "1", "--workers", "3", "--with-exact")
    assert abs(par["overall"] - seq["overall"]) <= 1e-12
    assert [r["round"] for r in par["rounds"]] == [1, 2, 3, 4]
    assert par["abs_error"] == pytest.approx(abs(par["overall"] - par["exact"]))


def test_per_point_and_output_file(capsys, ab_csv, tmp_path):
    out = tmp_path / "rep.json"
    report = evaluate(capsys, "--input", ab_csv, "--algo", "exact", "--per-point", "--output", out)
    assert report["per_point"]["a"] == [1.0] * 4
    assert json.loads(out.read_text()) == report


def test_quiet_keeps_stderr_empty(capsys, ab_csv):
    assert main(["evaluate", "--input", str(ab_csv), "--algo", "exact", "--quiet"]) == 0
    out, err = capsys.readouterr()
    assert err == ""
    json.loads(out)
    assert main(["evaluate", "--input", str(ab_csv), "--algo", "exact"]) == 0
    assert "overall" in capsys.readouterr().err


def test_label_options(capsys, tmp_path):
    (tmp_path / "first.csv").write_text("0,0,0\n0,0,1\n1,10,0\n1,10,1\n")
    report = evaluate(capsys, "--input", tmp_path / "first.csv", "--labels-col", "0", "--algo", "exact")
    assert report["overall"] == pytest.approx(0.900249, abs=1e-6)
    (tmp_path / "named.csv").write_text("g,x,y\n0,0,0\n0,0,1\n1,10,0\n1,10,1\n")
    report = evaluate(capsys, "--input", tmp_path / "named.csv", "--labels-col", "g", "--algo", "exact")
    assert report["overall"] == pytest.approx(0.900249, abs=1e-6)
    (tmp_path / "pts.csv").write_text("0,0\n0,1\n10,0\n10,1\n")
    (tmp_path / "lab.csv").write_text("0\n0\n1\n1\n")
    report = evaluate(capsys, "--input", tmp_path / "pts.csv", "--labels-file", tmp_path / "lab.csv", "--algo", "exact")
    assert report["overall"] == pytest.approx(0.900249, abs=1e-6)


def test_exit_codes(capsys, tmp_path, ab_csv):
    bad = tmp_path / "bad.csv"
    bad.write_text("0,0,0\n0,x,0\n")
    assert main(["evaluate", "--input", str(bad), "--algo", "exact"]) == EXIT_PARSE
    assert "bad.csv:2" in capsys.readouterr().err
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("0,0,0\n0,1,0\n5,0\n")
    assert main(["evaluate", "--input", str(ragged), "--algo", "exact"]) == EXIT_PARSE
    assert "ragged.csv:3" in capsys.readouterr().err
    one = tmp_path / "one.csv"
    one.write_text("0,0,0\n0,1,0\n")
    assert main(["evaluate", "--input", str(one), "--algo", "exact"]) == EXIT_VALIDATION
    assert main(["evaluate", "--input", str(ab_csv), "--t", "2", "--workers", "2", "--memory-cap", "1"]) == EXIT_RESOURCE
    assert "round" in capsys.readouterr().err
    assert main(["evaluate", "--input", str(tmp_path / "missing.csv"), "--algo", "exact"]) == EXIT_IO
    assert main(["generate", "--n", "100", "--output", str(tmp_path / "no" / "dir.csv")]) == EXIT_IO


@pytest.mark.parametrize(
    "argv",
    [
        ["--algo", "pps"],
        ["--algo", "pps", "--t", "5", "--epsilon", "0.1"],
        ["--algo", "pps", "--t", "5", "--c", "2"],
        ["--algo", "exact", "--memory-cap", "10"],
        ["--algo", "pps", "--t", "5", "--delta", "1.5"],
    ],
)
def test_usage_errors(capsys, ab_csv, argv):
    assert main(["evaluate", "--input", str(ab_csv), *argv]) == EXIT_PARSE
    assert capsys.readouterr().out == ""


def test_generate_byte_identical_and_norms(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["generate", "--n", "1000", "--seed", "7", "--output", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    big = tmp_path / "big.csv"
    assert main(["generate", "--n", "20000", "--output", str(big)]) == 0
    norms = np.linalg.norm(np.loadtxt(big, delimiter=","), axis=1)
    assert len(norms) == 20000
    assert np.sum(norms <= 1.0) == 19990
    np.testing.assert_allclose(np.sort(norms)[-10:], 1e4, rtol=1e-12)


def test_generated_labels_round_trip(capsys, tmp_path):
    path = tmp_path / "lab.csv"
    assert main(["generate", "--n", "300", "--seed", "2", "--cluster-with-kmedoids", "3", "--output", str(path)]) == 0
    report = evaluate(capsys, "--input", path, "--algo", "exact")
    assert report["k"] == 3 and report["n"] == 300


def test_experiment_error_table(capsys, tmp_path):
    out, js = tmp_path / "t.csv", tmp_path / "t.json"
    argv = ["experiment", "error-table", "--n", "300", "--k", "2..4", "--t", "16,32", "--reps", "3",
            "--output", str(out), "--json", str(js), "--quiet"]
    assert main(argv) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 3 * 2
    assert sum(r["strategy"] == "pps" for r in rows) == 6
    assert "simplified" in rows[0]
    assert len(json.loads(js.read_text())["rows"]) == 12
    assert capsys.readouterr().out == ""


def test_experiment_k_selection_and_scalability(capsys, tmp_path):
    assert main(["experiment", "k-selection", "--n", "300", "--range", "2..5", "--t", "32", "--reps", "4"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "range,t,strategy,exact_best_k,agreement"
    assert len(lines) == 1 + 2 * 3
    assert main(["experiment", "scalability", "--n", "2000", "--w", "1,2,4", "--repeats", "1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1 + 3


def test_console_script(ab_csv):
    exe = shutil.which("ppsilhouette")
    cmd = [exe] if exe else [sys.executable, "-m", "ppsilhouette"]
    proc = subprocess.run([*cmd, "evaluate", "--input", str(ab_csv), "--algo", "exact", "--quiet"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["overall"] == pytest.approx(0.900249, abs=1e-6)
