import csv
import json

import pytest

from wosnet.cli import EXIT_CONFIG, EXIT_SIZE, EXIT_VERIFY, main


def _rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# wosnet ") and "config_hash=" in lines[0] and "seed=" in lines[0]
    return list(csv.DictReader(lines[1:]))


def test_solve_quadratic_origin(tmp_path):
    assert main(["solve", "--points", "origin", "--m", "10000", "--out", str(tmp_path)]) == 0
    row = _rows(tmp_path / "solve.csv")[0]
    est, se, eps = float(row["estimate"]), float(row["std_error"]), float(row["eps"])
    assert abs(est - 1.0) <= 3 * se + 2 * eps
    assert float(row["abs_error"]) == pytest.approx(abs(est - float(row["analytic"])))
    meta = json.loads((tmp_path / "solve.json").read_text())
    assert meta["seed"] == 0 and len(meta["config_hash"]) == 16


def test_solve_byte_identical_runs_and_threads(tmp_path):
    args = ["solve", "--points", "axis:2", "--m", "3000", "--seed", "5"]
    for name, extra in (("a", []), ("b", []), ("c", ["--threads", "4"])):
        assert main(args + extra + ["--out", str(tmp_path / name)]) == 0
    for f in ("solve.csv", "solve.json"):
        a = (tmp_path / "a" / f).read_bytes()
        assert a == (tmp_path / "b" / f).read_bytes() == (tmp_path / "c" / f).read_bytes()


def test_solve_standard_error_scaling(tmp_path):
    ses = []
    for m in (10_000, 40_000):
        out = tmp_path / str(m)
        assert main(["solve", "--points", "axis:2", "--m", str(m), "--m2", "4", "--out", str(out)]) == 0
        ses.append(float(_rows(out / "solve.csv")[1]["std_error"]))
    assert 0.4 <= ses[1] / ses[0] <= 0.6


def test_solve_rejects_source_in_two_dims(tmp_path, capsys):
    assert main(["solve", "--dim", "2", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "d >= 3" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"domain": "cube", "problem": "harmonic-linear", "m": 200, "seed": 3}))
    assert main(["solve", "--config", str(cfg), "--m", "300", "--out", str(tmp_path / "o")]) == 0
    row = _rows(tmp_path / "o" / "solve.csv")[0]
    assert row["M"] == "300" and row["M2"] == "0"
    meta = json.loads((tmp_path / "o" / "solve.json").read_text())
    assert meta["seed"] == 3 and meta["config"]["domain"] == "cube"


def test_config_file_unknown_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("WOSNET_OUT", str(tmp_path / "env"))
    assert main(["solve", "--m", "100", "--problem", "harmonic-linear"]) == 0
    assert (tmp_path / "env" / "solve.csv").exists()


SMALL = ["synthesize", "--domain", "cube", "--problem", "harmonic-sum", "--plan-overrides", '{"delta1": 0.2}']


def test_synthesize_small_plan_within_budget(tmp_path):
    assert main(SMALL + ["--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["budget"]["within_3x"]
    assert rep["l2_error"]["n_points"] >= 10_000
    assert (tmp_path / "tableau.json").exists()


def test_synthesize_rerun_from_saved_tableau(tmp_path):
    assert main(SMALL + ["--out", str(tmp_path / "a")]) == 0
    tab = str(tmp_path / "a" / "tableau.json")
    assert main(SMALL + ["--tableau", tab, "--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert a["l2_error"] == b["l2_error"] and a["caps"] == b["caps"]


TRIVIAL = ["synthesize", "--domain", "cube", "--problem", "superposition",
           "--plan-overrides", '{"M": 1, "M1": 1, "M2": 1}', "--fixed-steps", "1"]


def test_synthesize_flatten_trivial(tmp_path):
    assert main(TRIVIAL + ["--flatten", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["flatten"]["max_relative_deviation"] <= 1e-9
    net = json.loads((tmp_path / "network.json").read_text())
    assert net["dims"][0] == 3 and net["dims"][-1] == 1


def test_synthesize_best_of_r(tmp_path):
    assert main(SMALL + ["--tableaux", "3", "--quad-points", "2000", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert len(rep["candidate_errors"]) == 3
    assert rep["l2_error"]["l2"] == min(rep["candidate_errors"])


def test_synthesize_size_guard(tmp_path):
    args = ["synthesize", "--domain", "cube", "--problem", "superposition",
            "--plan-overrides", '{"M": 4, "M1": 4, "M2": 4}', "--fixed-steps", "6",
            "--flatten", "--size-budget", "1000", "--out", str(tmp_path)]
    assert main(args) == EXIT_SIZE


def test_verify_only_sqrt(tmp_path):
    assert main(["verify", "--only", "sqrt", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "verify.json").read_text())
    assert rep["passed"] and all(c["name"].startswith("sqrt") for c in rep["checks"])
    assert {"measured", "bound", "margin", "passed"} <= set(rep["checks"][0])


def test_verify_negative_control(tmp_path):
    # the sqrt network's sup error is a quarter of its target, so a 0.2 scale must trip it
    assert main(["verify", "--only", "sqrt", "--tolerance-scale", "0.2", "--out", str(tmp_path)]) == EXIT_VERIFY


def test_verify_unknown_check_rejected(tmp_path):
    with pytest.raises(SystemExit):
        main(["verify", "--only", "nothing", "--out", str(tmp_path)])


def test_bench_table(tmp_path):
    assert main(["bench", "--dims", "3", "100", "--m", "2000", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "bench.csv")
    assert [r["d"] for r in rows] == ["3", "100"]
    assert {"d", "M", "eps", "walltime_ms", "walks_per_s"} <= set(rows[0])
    per_step = [float(r["ns_per_step"]) for r in rows]
    assert per_step[1] / per_step[0] <= 3 * 100 / 3


def test_bench_estimates_thread_independent(tmp_path):
    for t in ("1", "4"):
        assert main(["bench", "--dims", "3", "--m", "5000", "--threads", t, "--out", str(tmp_path / t)]) == 0
    a, b = (_rows(tmp_path / t / "bench.csv")[0] for t in ("1", "4"))
    assert a["mean_sum_r2"] == b["mean_sum_r2"] and a["mean_steps"] == b["mean_steps"]
