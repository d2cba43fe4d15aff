import csv
import io
import json

import numpy as np
import pytest

from odlqr import cli, evaluate, standard_pair
from odlqr.cli import landscape_rows, main, parse_grid
from odlqr.problems import doyle_1d, Y_SPECIAL

TOY = {"version": "odlqr-problem-v1", "A": [[0.0]], "B": [[1.0]], "C": [[1.0]],
       "Q": [[1.0]], "R": [[1.0]], "Y": [[1.0, 0.0], [0.0, 1.0]]}

# square C with fewer inputs than states: the standard observer is deadbeat and S22 is singular
SINGULAR = {"version": "odlqr-problem-v1", "A": [[0.5, 1.0], [0.0, 0.7]], "B": [[0.0], [1.0]],
            "C": [[1.0, 0.0], [0.0, 1.0]], "Q": [[1.0, 0.0], [0.0, 1.0]], "R": [[1.0]],
            "Y": [[2, 0, 0.3, 0.1], [0, 2, 0.2, 0.1], [0.3, 0.2, 1, 0], [0.1, 0.1, 0, 1]]}


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def read_csv(text):
    return list(csv.reader(io.StringIO(text)))


def grid_min(rows):
    stable = [r for r in rows if r[5] == 1]
    return min(stable, key=lambda r: r[2])


def test_design_builtin(capsys):
    code, out, _ = run(capsys, "design", "--problem", "doyle-1d")
    assert code == 0
    d = json.loads(out)
    np.testing.assert_allclose(d["K_star"], [[4.8768, 4.3773]], atol=5e-4)
    np.testing.assert_allclose(d["L_star"], [[-0.5667], [1.8333]], atol=5e-4)
    assert d["validation"]["ok"]


def test_design_toy_file_gives_zero_gain(tmp_path, capsys):
    code, out, _ = run(capsys, "design", "--problem", write(tmp_path, "toy.json", TOY))
    assert code == 0
    assert json.loads(out)["K_star"] == [[0.0]]


def test_out_directory(tmp_path, capsys):
    code, out, err = run(capsys, "validate", "--problem", "doyle-2d", "--out", str(tmp_path / "o"))
    assert code == 0 and out == ""
    d = json.loads((tmp_path / "o" / "validate.json").read_text(encoding="utf-8"))
    assert d["validation"]["ok"] and "wrote" in err


def test_grad_and_stationary(capsys):
    code, out, _ = run(capsys, "grad", "--problem", "doyle-1d")
    d = json.loads(out)
    assert code == 0
    assert d["grad_norm_K"] > 1e-3 and d["grad_norm_L"] <= 1e-8 * (1 + d["cost"])
    assert d["fd_vs_analytic_rel_error"] <= 1e-5
    code, out, _ = run(capsys, "stationary", "--problem", "doyle-1d")
    d = json.loads(out)
    assert code == 0
    np.testing.assert_allclose(d["K_dd"], [[4.2598, 3.9482]], atol=5e-4)
    assert d["fd_grad_norm_K"] <= 1e-5 and d["fd_grad_norm_L"] <= 1e-5


def test_stationary_one_gain_mode(capsys):
    code, out, _ = run(capsys, "stationary", "--problem", "doyle-1d-ys", "--update", "K")
    d = json.loads(out)
    assert code == 0 and d["update"] == "K"
    np.testing.assert_allclose(d["K_dd"], d["K_star"], atol=1e-6)


def test_simulate(capsys):
    code, out, _ = run(capsys, "simulate", "--problem", "doyle-1d", "--samples", "2000", "--seed", "4")
    d = json.loads(out)
    assert code == 0 and d["samples"] == 2000 and d["seed"] == 4
    assert abs(d["mc_mean"] - d["analytic_cost"]) <= 4 * d["mc_stderr"]


def test_dominance_reports_na_for_doyle(capsys):
    code, out, _ = run(capsys, "dominance", "--problem", "doyle-1d")
    d = json.loads(out)
    assert code == 0
    assert d["verification"]["status"] == "N/A"
    assert d["coefficients"]["applicable"] is False


def test_dominance_feasible_file(tmp_path, capsys):
    prob = dict(TOY, A=[[0.05]])
    code, out, _ = run(capsys, "dominance", "--problem", write(tmp_path, "s.json", prob),
                       "--samples", "200")
    d = json.loads(out)
    assert code == 0
    assert d["verification"]["status"] == "checked"
    assert d["verification"]["violations"] == 0


def test_reproduce_doyle_2d_prints_assumption(capsys):
    code, out, err = run(capsys, "reproduce", "doyle-2d")
    assert code == 0
    assert "ASSUMPTION" in err and "FAIL" not in err
    d = json.loads(out)
    assert d["all_pass"] and d["assumptions"]
    assert d["cases"]["Y_s"]["degenerate_to_standard"]


def test_reproduce_target_miss_exits_1(capsys, monkeypatch):
    targets = {k: dict(v) for k, v in cli.TARGETS.items()}
    targets["doyle-2d"]["Y_g"] = [("J_dd", 25.0, 1e-3)]
    monkeypatch.setattr(cli, "TARGETS", targets)
    code, out, err = run(capsys, "reproduce", "doyle-2d")
    assert code == 1
    assert "FAIL Y_g J_dd" in err
    assert json.loads(out)["all_pass"] is False


def test_input_errors_exit_2(tmp_path, capsys):
    assert run(capsys, "design")[0] == 2
    assert run(capsys, "design", "--problem", str(tmp_path / "missing.json"))[0] == 2
    code, _, err = run(capsys, "design", "--problem", write(tmp_path, "bad.json", "{\n  \"A\": [[1, 2],\n"))
    assert code == 2 and "line" in err
    bad = dict(TOY, B=[[1.0, 2.0, 3.0]])
    assert run(capsys, "design", "--problem", write(tmp_path, "dim.json", bad))[0] == 2
    assert run(capsys, "design", "--problem", "doyle-1d", "--jobs", "0")[0] == 2
    assert run(capsys, "design", "--problem", "doyle-1d", "--tol", "-1")[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_numerical_failure_exits_3(tmp_path, capsys):
    code, _, err = run(capsys, "stationary", "--problem", write(tmp_path, "sq.json", SINGULAR))
    assert code == 3 and "numerical failure" in err


def test_landscape_rows_and_header(capsys):
    code, out, _ = run(capsys, "landscape", "--problem", "doyle-1d", "--vary", "L",
                       "--grid=-5,5,7;-2,2,5", "--jobs", "1")
    assert code == 0
    rows = read_csv(out)
    assert tuple(rows[0]) == cli.CSV_HEADER
    assert len(rows) == 1 + 7 * 5
    assert out.count("\r\n") == len(rows)
    unstable = [r for r in rows[1:] if r[5] == "0"]
    assert unstable and all(r[2] == r[3] == r[4] == "" for r in unstable)
    stable = [r for r in rows[1:] if r[5] == "1"]
    assert all(len(r[2]) > 0 for r in stable)


def test_landscape_is_independent_of_worker_count(capsys):
    args = ("landscape", "--problem", "doyle-1d", "--vary", "K", "--grid=-5,5,9")
    _, a, _ = run(capsys, *args, "--jobs", "1")
    _, b, _ = run(capsys, *args, "--jobs", "3")
    _, c, _ = run(capsys, *args, "--jobs", "3")
    assert a == b == c


def test_landscape_rejects_gains_without_two_entries(capsys):
    code, _, err = run(capsys, "landscape", "--problem", "doyle-2d", "--vary", "K", "--grid=-1,1,3")
    assert code == 2 and "--entries" in err
    code, out, _ = run(capsys, "landscape", "--problem", "doyle-2d", "--vary", "K",
                       "--grid=-1,1,3", "--entries", "0,0;1,1", "--jobs", "1")
    assert code == 0 and len(read_csv(out)) == 10


@pytest.mark.parametrize("grid", ["-5,5,1", "-5,5", "a,b,3", "-inf,5,3", "1,2,3;1,2,3;1,2,3"])
def test_bad_grids(grid, capsys):
    code, _, _ = run(capsys, "landscape", "--problem", "doyle-1d", "--vary", "K", "--grid=" + grid)
    assert code == 2


def test_k_scan_general_correlation_beats_k_star():
    p = doyle_1d()
    std = standard_pair(p)
    rows = landscape_rows(p, "K", parse_grid("-5,5,51"), jobs=2)
    best = grid_min(rows)
    step = 0.2
    K = std.K_star.ravel()
    assert abs(best[0] - K[0]) > step or abs(best[1] - K[1]) > step
    assert best[2] < evaluate(p, std.gains).cost


def test_k_scan_special_correlation_has_minimum_at_k_star():
    p = doyle_1d(Y_SPECIAL)
    K = standard_pair(p).K_star.ravel()
    best = grid_min(landscape_rows(p, "K", parse_grid("-5,5,51"), jobs=2))
    assert abs(best[0] - K[0]) <= 0.2 and abs(best[1] - K[1]) <= 0.2


def test_l_scan_minimum_cost_approaches_standard_cost_under_refinement():
    # the stable L set of this plant is a thin sliver, so coarse grids sit off the
    # valley floor; the minimum cost still decreases towards J(K*, L*) from above
    p = doyle_1d()
    J = evaluate(p, standard_pair(p).gains).cost
    prev = np.inf
    for steps in (51, 101, 201):
        best = grid_min(landscape_rows(p, "L", parse_grid(f"-5,5,{steps}"), jobs=2))
        assert J <= best[2] <= prev
        prev = best[2]
    assert prev - J <= 1e-3


def test_csv_formatting_precision():
    text = cli.format_csv([(0.1, 1 / 3, 2.0, 1e-20, None, 1), (1.0, 2.0, None, None, None, 0)])
    rows = read_csv(text)
    assert rows[1] == ["0.1", "0.333333333333", "2", "1e-20", "", "1"]
    assert rows[2] == ["1", "2", "", "", "", "0"]


def test_json_has_no_nan(capsys):
    assert "NaN" not in cli.dumps({"x": float("nan"), "y": np.array([1.0, np.inf])})
