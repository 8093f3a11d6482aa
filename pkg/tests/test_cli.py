import csv
import json

import numpy as np
import pytest

from lglocp.basis import make_rule
from lglocp.cli import (EXIT_NOT_CONVERGED, EXIT_OK, EXIT_USAGE, RunResult, hamiltonian_study, main,
                        monotone_decay, parse_n_range, parse_schemes, run_solve)
from lglocp.problems import reference_example1


def test_rule_text_output(capsys):
    assert main(["rule", "--family", "lgl", "--n", "5"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    values = np.array([[float(v) for v in line.split()] for line in lines])
    rule = make_rule("lgl", 5)
    np.testing.assert_array_equal(values[:, 0], rule.nodes)
    np.testing.assert_array_equal(values[:, 1], rule.weights)


def test_rule_json_output(capsys):
    assert main(["rule", "--family", "lgr", "--n", "4", "--json"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["family"] == "lgr" and out["n"] == 4
    assert out["nodes"] == make_rule("lgr", 4).nodes.tolist()


@pytest.mark.parametrize("argv", [
    ["rule", "--family", "cheb", "--n", "4"],
    ["rule", "--family", "lgl", "--n", "1"],
    ["rule", "--family", "lgl", "--n", "0"],
    ["solve", "--problem", "example1", "--scheme", "lgl-int", "--m", "0", "--n", "5"],
    ["solve", "--problem", "nope", "--scheme", "lgl-int", "--m", "1", "--n", "5"],
    ["study", "convergence", "--problem", "example1", "--schemes", "lgl-int",
     "--n-range", "9:5", "--out", "x.csv"],
    ["study", "convergence", "--problem", "example2-full", "--schemes", "lgl-int",
     "--n-range", "3", "--out", "x.csv"],
    ["study", "hamiltonian", "--problem", "example1", "--schemes", "lgl-int",
     "--m", "1", "--n", "5", "--out", "x.json"],
    [],
])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as info:
        raise SystemExit(main(argv))
    assert info.value.code == EXIT_USAGE


def test_solve_writes_json(tmp_path):
    out = tmp_path / "run.json"
    code = main(["solve", "--problem", "example1", "--scheme", "lgl-int", "--m", "1", "--n", "15",
                 "--out", str(out)])
    assert code == EXIT_OK
    res = RunResult.from_json(out.read_text())
    assert res.converged and res.n == 15
    assert res.errors["state"] < 1e-8


def test_non_convergence_exit_code(tmp_path):
    # an unreachable tolerance ends at the iteration limit
    code = main(["solve", "--problem", "example1", "--scheme", "lgl-int", "--m", "1", "--n", "12",
                 "--tol", "1e-300", "--out", str(tmp_path / "r.json")])
    assert code == EXIT_NOT_CONVERGED


def test_run_result_round_trip():
    res = run_solve("example1", "lgr", 1, 8)
    again = RunResult.from_json(res.to_json())
    assert again == res


def test_convergence_study_csv(tmp_path, capsys):
    out = tmp_path / "conv.csv"
    code = main(["study", "convergence", "--problem", "example1", "--schemes", "lgl-int,lgr",
                 "--n-range", "10:20:5", "--out", str(out)])
    assert code == EXIT_OK
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["scheme", "n", "state_err", "control_err", "costate_err", "objective_err"]
    assert len(rows) == 7
    assert "lgl-int: monotone decay state=True" in capsys.readouterr().out


def test_parse_n_range():
    assert parse_n_range("5:25:5") == [5, 10, 15, 20, 25]
    assert parse_n_range("7") == [7]
    assert parse_n_range("3:5") == [3, 4, 5]


def test_monotone_decay():
    assert monotone_decay([1e-2, 1e-4, 1e-7, 1e-10, 2e-10])
    assert not monotone_decay([1e-2, 5e-3])
    # stops checking once within 10x of the floor
    assert monotone_decay([1e-3, 1e-9, 5e-10])


def test_augmented_objective_matches_integral():
    a = run_solve("example1", "lgl-int", 1, 20)
    b = run_solve("example1", "lgl-aug", 1, 20)
    assert a.converged and b.converged
    assert abs(a.objective - b.objective) <= 1e-8
    assert abs(a.objective - reference_example1().objective) <= 1e-9


@pytest.fixture(scope="module")
def orbit_profiles():
    return {(s, n): run_solve("example2-scaled", s, 40, n, with_errors=False)
            for s, n in [("lgl-int", 2), ("lgl-int", 3), ("lgr", 3)]}


def test_lgl_hamiltonian_mean_closer_to_zero(orbit_profiles):
    lgl, lgr = orbit_profiles["lgl-int", 3], orbit_profiles["lgr", 3]
    assert lgl.converged and lgr.converged
    assert abs(lgl.hamiltonian["mean"]) < abs(lgr.hamiltonian["mean"])


def test_two_point_lgl_oscillates_more(orbit_profiles):
    coarse, fine = orbit_profiles["lgl-int", 2], orbit_profiles["lgl-int", 3]
    assert coarse.converged
    assert coarse.hamiltonian["amplitude"] > fine.hamiltonian["amplitude"]


def test_single_scheme_study():
    out = hamiltonian_study("example2-scaled", parse_schemes("lgr"), 40, 3)
    assert len(out["profiles"]) == 1
