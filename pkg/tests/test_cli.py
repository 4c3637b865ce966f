import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from eulertvc import problems
from eulertvc.cli import main


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def load(path):
    return json.loads(path.read_text())


@pytest.fixture
def ce_file(problem_file):
    return problem_file("counterexample")


def test_solve_writes_path_and_report(ce_file, tmp_path, capsys):
    assert main(["solve", ce_file, "--horizon", "20", "--out", str(tmp_path)]) == 0
    table = rows(tmp_path / "path.csv")
    assert table[0] == ["t", "c"]
    assert table[6] == ["5", "0.625"]
    assert len(table) == 1 + 23
    report = load(tmp_path / "solve_report.json")
    assert report["converged"] is True
    assert {"iterations", "final_residual_norm", "tail_policy", "steady_state"} <= set(report)
    assert "steady state: c=0.625" in capsys.readouterr().out


def test_solve_json_format(ce_file, tmp_path):
    assert main(["solve", ce_file, "--horizon", "5", "--out", str(tmp_path), "--format", "json"]) == 0
    data = load(tmp_path / "path.json")
    assert data["t"][:3] == [0, 1, 2] and data["values"][1] == [0.75]


def test_missing_file(tmp_path, capsys):
    missing = tmp_path / "nope.prob"
    assert main(["solve", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_pinned_mode_without_pins(ce_file, tmp_path, capsys):
    assert main(["solve", ce_file, "--mode", "pinned-initial", "--out", str(tmp_path)]) == 1
    assert "c(0)" in capsys.readouterr().err


def test_parse_error_reports_position(tmp_path, capsys):
    bad = tmp_path / "bad.prob"
    bad.write_text("utility U = (c(t) - 1\n")
    assert main(["solve", str(bad), "--out", str(tmp_path)]) == 1
    assert "1:13" in capsys.readouterr().err


def test_check_tvc_counterexample(ce_file, tmp_path):
    code = main(["check-tvc", ce_file, "--perturb", "p", "--window", "5:50", "--out", str(tmp_path)])
    assert code == 2
    verdict = load(tmp_path / "tvc_verdict.json")
    assert verdict["classification"] == "violated"
    assert abs(verdict["liminf_estimate"] - 1.0) <= 1e-9
    table = rows(tmp_path / "tvc_series.csv")
    assert table[0] == ["T_prime", "boundary_term", "running_inf"]
    assert len(table) == 1 + 46


def test_check_tvc_tracking_michel(problem_file, tmp_path):
    src = problem_file("discounted_tracking")
    code = main(["check-tvc", src, "--michel", "0.5", "--window", "10:60", "--out", str(tmp_path)])
    assert code == 0
    assert abs(load(tmp_path / "tvc_verdict.json")["liminf_estimate"]) <= 1e-4


def test_check_tvc_zero_perturbation(tmp_path):
    src = tmp_path / "zero.prob"
    src.write_text(problems.source("counterexample") + "perturb q0 = expr(0)\n")
    code = main(["check-tvc", str(src), "--perturb", "q0", "--out", str(tmp_path)])
    assert code == 0
    values = [float(r[1]) for r in rows(tmp_path / "tvc_series.csv")[1:]]
    assert values == [0.0] * len(values)


def test_unknown_perturbation(ce_file, tmp_path, capsys):
    assert main(["check-tvc", ce_file, "--perturb", "zz", "--out", str(tmp_path)]) == 1
    assert "zz" in capsys.readouterr().err


def test_michel_out_of_range(ce_file, tmp_path):
    assert main(["check-tvc", ce_file, "--michel", "1.5", "--out", str(tmp_path)]) == 1


def test_diagnose_counterexample(ce_file, tmp_path, capsys):
    assert main(["diagnose", ce_file, "--out", str(tmp_path)]) == 2
    verdict = load(tmp_path / "assumption_verdict.json")
    assert verdict["L1"] == "divergent"
    assert abs(verdict["L2"] - 0.75) <= 1e-6
    assert verdict["classification"] == "non-uniform"
    assert {"uniformity_defect", "tol"} <= set(verdict)
    table = rows(tmp_path / "a_grid.csv")
    assert table[0] == ["T_prime", "eps=0.1", "eps=0.01", "eps=0.001", "eps=0.0001"]
    assert [r[0] for r in table[1:]] == ["10", "20", "40", "80", "160", "320", "640"]
    assert "L1 = divergent" in capsys.readouterr().out


def test_diagnose_tracking(problem_file, tmp_path):
    assert main(["diagnose", problem_file("discounted_tracking"), "--out", str(tmp_path)]) == 0
    v = load(tmp_path / "assumption_verdict.json")
    assert v["classification"] == "uniform" and abs(v["L1"] - v["L2"]) <= 1e-4


def test_diagnose_zero_perturbation(tmp_path):
    src = tmp_path / "zero.prob"
    src.write_text(problems.source("counterexample") + "perturb q0 = expr(0)\n")
    assert main(["diagnose", str(src), "--perturb", "q0", "--out", str(tmp_path)]) == 0
    grid = np.loadtxt(tmp_path / "a_grid.csv", delimiter=",", skiprows=1)
    assert not grid[:, 1:].any()


def test_diagnose_custom_axes_and_threads(ce_file, tmp_path):
    code = main(["diagnose", ce_file, "--eps", "0.1,0.01,0.001,0.0001", "--T-axis",
                 "20,40,80,160", "--threads", "3", "--out", str(tmp_path)])
    assert code == 2


def test_diagnose_grid_too_small(ce_file, tmp_path):
    assert main(["diagnose", ce_file, "--eps", "0.1,0.01", "--out", str(tmp_path)]) == 1


def write_path(dest, values):
    dest.write_text("t,c\n" + "".join(f"{t},{v!r}\n" for t, v in enumerate(values)))


def test_compare_identical(ce_file, tmp_path):
    main(["solve", ce_file, "--horizon", "30", "--out", str(tmp_path)])
    p = str(tmp_path / "path.csv")
    assert main(["compare", ce_file, p, p, "--out", str(tmp_path)]) == 0
    D = [float(r[1]) for r in rows(tmp_path / "overtaking.csv")[1:]]
    assert D == [0.0] * len(D)


def test_compare_shifted_path(ce_file, tmp_path, capsys):
    euler = [1.0, 0.75] + [0.625] * 31
    write_path(tmp_path / "a.csv", euler)
    write_path(tmp_path / "b.csv", euler[:2] + [v + 0.1 for v in euler[2:]])
    code = main(["compare", ce_file, str(tmp_path / "a.csv"), str(tmp_path / "b.csv"),
                 "--out", str(tmp_path)])
    assert code == 0
    assert "second overtakes" in capsys.readouterr().out


def test_compare_length_mismatch(ce_file, tmp_path, capsys):
    write_path(tmp_path / "a.csv", [0.625] * 20)
    write_path(tmp_path / "b.csv", [0.625] * 30)
    code = main(["compare", ce_file, str(tmp_path / "a.csv"), str(tmp_path / "b.csv"),
                 "--out", str(tmp_path)])
    assert code == 0
    assert "common window" in capsys.readouterr().out
    assert len(rows(tmp_path / "overtaking.csv")) == 1 + 18


def test_compare_malformed(ce_file, tmp_path):
    (tmp_path / "bad.csv").write_text("t,c\n0,x\n")
    assert main(["compare", ce_file, str(tmp_path / "bad.csv"), str(tmp_path / "bad.csv")]) == 1


def test_module_entry_point(ce_file, tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "eulertvc", "solve", ce_file, "--horizon", "6", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert out.returncode == 0 and (tmp_path / "path.csv").exists()


def test_exit_codes_are_stable(ce_file, tmp_path):
    codes = {main(["check-tvc", ce_file, "--out", str(tmp_path)]) for _ in range(3)}
    assert codes == {2}
