"""Command-line pipeline: generators, solve/compare runs, files, exit codes."""

import json
import warnings

import pytest

from qubo_forge.analysis import load_report
from qubo_forge.cli import (
    build_regression,
    bundled_data,
    load_knapsack,
    load_regression_csv,
    main,
)
from qubo_forge.compiler import compile_problem
from qubo_forge.problem import Problem
from qubo_forge.solvers import solve_exhaustive


@pytest.fixture
def mixed_problem_file(mixed_problem, tmp_path):
    path = tmp_path / "mixed.problem.json"
    mixed_problem.save(path)
    return path


@pytest.fixture
def f3_problem_file(tmp_path):
    _, problem = load_knapsack(bundled_data("f3_l-d_kp_4_20.txt"))
    path = tmp_path / "f3.problem.json"
    problem.save(path)
    return path


def run_cli(*argv) -> int:
    return main([str(arg) for arg in argv])


class TestLoadKnapsack:
    def test_bundled_f3(self):
        instance, problem = load_knapsack(bundled_data("f3_l-d_kp_4_20.txt"))
        assert instance.n_obj == 4 and instance.w_max == 20.0
        assert len(problem.variables) == 4
        assert len(problem.constraints) == 1
        assert problem.constraints[0].comparison.op == "<="
        assert problem.objectives[0].direction == "maximize"

    def test_single_item_heavier_than_capacity(self, tmp_path):
        path = tmp_path / "heavy.txt"
        path.write_text("1 5\n10 9\n")
        _, problem = load_knapsack(path)
        model = compile_problem(problem)
        best = solve_exhaustive(model).best_decoded
        assert best == {"obj_0": 0.0}  # the empty bag, objective 0

    def test_two_item_instance(self, tmp_path):
        path = tmp_path / "two.txt"
        path.write_text("2 4\n5 2\n10 3\n")
        instance, problem = load_knapsack(path)
        model = compile_problem(problem)
        best = solve_exhaustive(model).best_decoded
        assert (best["obj_0"], best["obj_1"]) == (0.0, 1.0)  # item 2 alone scores 10
        assert instance.p_arr == (5.0, 10.0)

    @pytest.mark.parametrize("content", ["", "2\n", "2 4\n5 2\n", "2 4\n5 two\n1 1\n", "2 0\n5 2\n1 1\n"])
    def test_malformed_instances(self, tmp_path, content):
        path = tmp_path / "bad.txt"
        path.write_text(content)
        with pytest.raises(ValueError):
            load_knapsack(path)


class TestBuildRegression:
    def test_bundled_iris_binary_count(self):
        dataset, problem = build_regression(bundled_data("iris30.csv"), 2, -0.25, 0.25, 0.25)
        assert dataset.x.shape == (30, 3)
        assert (dataset.x[:, -1] == 1.0).all()
        model = compile_problem(problem)
        assert len(model.binary_variables()) == 6  # three weights, two bits each

    def test_perfect_fit_on_grid(self, tmp_path):
        path = tmp_path / "line.csv"
        path.write_text("x,y\n0,0\n1,1\n2,2\n")
        _, problem = build_regression(path, 1, -1.0, 1.0, 0.5)
        model = compile_problem(problem)
        solution = solve_exhaustive(model)
        assert solution.best_energy == pytest.approx(0.0, abs=1e-9)
        assert solution.best_decoded == {"w_0": 1.0, "w_1": 0.0}  # slope 1, intercept 0

    def test_too_few_points_rejected(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("1.0,2.0,3.0\n")
        with pytest.raises(ValueError, match="at least"):
            build_regression(path, 2, -1, 1, 0.5)

    def test_rank_deficiency_warns(self, tmp_path):
        path = tmp_path / "flat.csv"
        path.write_text("x,y\n1,1\n1,1\n1,1\n")
        with pytest.warns(UserWarning, match="rank-deficient"):
            build_regression(path, 1, -1, 1, 0.5)

    def test_header_optional(self, tmp_path):
        with_header = tmp_path / "a.csv"
        with_header.write_text("x,y\n0,0\n1,1\n")
        without = tmp_path / "b.csv"
        without.write_text("0,0\n1,1\n")
        xa, ya = load_regression_csv(with_header)
        xb, yb = load_regression_csv(without)
        assert (xa == xb).all() and (ya == yb).all()


class TestSolveCommand:
    def test_reference_problem_exhaustive(self, mixed_problem_file, tmp_path, capsys):
        out = tmp_path / "out"
        code = run_cli("solve", mixed_problem_file, "--solver", "exhaustive", "--out-dir", out)
        captured = capsys.readouterr().out
        assert code == 0
        assert "a: 0" in captured and "b: 3" in captured and "c: -1" in captured
        assert "best energy:   -2" in captured
        stem = mixed_problem_file.stem
        for suffix in ("solution.json", "report.json", "model.json", "matrix.txt", "exhaustive.cdf.csv"):
            assert (out / f"{stem}.{suffix}").exists()

    def test_unconstrained_problem_exits_zero(self, tmp_path):
        problem = Problem()
        problem.add_binary_variable("x")
        problem.add_objective("x")
        problem.freeze()
        path = tmp_path / "free.problem.json"
        problem.save(path)
        assert run_cli("solve", path, "--solver", "sa", "--runs", 5, "--out-dir", tmp_path / "o") == 0

    def test_knapsack_sa_report_best(self, f3_problem_file, tmp_path):
        out = tmp_path / "out"
        code = run_cli(
            "solve", f3_problem_file, "--solver", "sa", "--runs", 100, "--seed", 11, "--out-dir", out
        )
        assert code == 0
        solution, report, meta = load_report(out / "f3.problem.solution.json")
        assert solution.best_energy == -35.0
        assert report.objective_values == [35.0]
        assert meta["solver"] == "sa" and meta["runs"] == 100

    def test_infeasible_after_retries_exits_two(self, tmp_path):
        problem = Problem()
        problem.add_binary_variable("x")
        problem.add_objective("x")
        problem.add_constraint("x >= 2")
        problem.freeze()
        path = tmp_path / "impossible.problem.json"
        problem.save(path)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            code = run_cli("solve", path, "--solver", "exhaustive", "--out-dir", tmp_path / "o")
        assert code == 2

    def test_lambda_update_flow(self, f3_problem_file, tmp_path):
        code = run_cli(
            "solve", f3_problem_file,
            "--solver", "sa", "--runs", 30, "--seed", 2,
            "--lambda-method", "manual", "--lambda-value", "0.01",
            "--lambda-update", "sequential", "--trials", 5,
            "--out-dir", tmp_path / "o",
        )
        assert code == 0
        _, _, meta = load_report(tmp_path / "o" / "f3.problem.solution.json")
        assert meta["trials"] > 1
        assert all(lam > 0.01 for lam in meta["lambdas"])

    def test_manual_without_value_is_an_error(self, f3_problem_file, tmp_path, capsys):
        code = run_cli("solve", f3_problem_file, "--lambda-method", "manual", "--out-dir", tmp_path)
        assert code == 1
        assert "lambda-value" in capsys.readouterr().err

    def test_missing_file_is_an_error(self, tmp_path):
        assert run_cli("solve", tmp_path / "nope.json") == 1

    def test_env_var_overrides_out_dir(self, mixed_problem_file, tmp_path, monkeypatch):
        env_dir = tmp_path / "env_out"
        monkeypatch.setenv("QUBO_FORGE_OUT", str(env_dir))
        code = run_cli("solve", mixed_problem_file, "--solver", "exhaustive", "--out-dir", tmp_path / "flag_out")
        assert code == 0
        assert env_dir.exists() and not (tmp_path / "flag_out").exists()


class TestSolverSection:
    def test_file_defaults_used_when_flags_absent(self, tmp_path):
        _, problem = load_knapsack(bundled_data("f3_l-d_kp_4_20.txt"))
        problem.solver_defaults = {"solver": "exhaustive", "seed": 5}
        path = tmp_path / "f3.problem.json"
        problem.save(path)
        assert Problem.load(path).solver_defaults == {"solver": "exhaustive", "seed": 5}
        out = tmp_path / "o"
        assert run_cli("solve", path, "--out-dir", out) == 0
        _, _, meta = load_report(out / "f3.problem.solution.json")
        assert meta["solver"] == "exhaustive" and meta["seed"] == 5

    def test_flags_override_file_defaults(self, tmp_path):
        _, problem = load_knapsack(bundled_data("f3_l-d_kp_4_20.txt"))
        problem.solver_defaults = {"solver": "exhaustive", "runs": 3}
        path = tmp_path / "f3.problem.json"
        problem.save(path)
        out = tmp_path / "o"
        assert run_cli("solve", path, "--solver", "sa", "--runs", 7, "--out-dir", out) == 0
        _, _, meta = load_report(out / "f3.problem.solution.json")
        assert meta["solver"] == "sa" and meta["runs"] == 7

    def test_unknown_section_key_is_an_error(self, tmp_path, capsys):
        _, problem = load_knapsack(bundled_data("f3_l-d_kp_4_20.txt"))
        problem.solver_defaults = {"annealing_time": 3}
        path = tmp_path / "f3.problem.json"
        problem.save(path)
        assert run_cli("solve", path, "--out-dir", tmp_path) == 1
        assert "solver section" in capsys.readouterr().err


class TestCompareCommand:
    def test_knapsack_summary(self, f3_problem_file, tmp_path, capsys):
        out = tmp_path / "cmp"
        code = run_cli(
            "compare", f3_problem_file,
            "--solvers", "sa,exhaustive", "--runs", 50, "--seed", 11, "--val-ref", -30,
            "--out-dir", out,
        )
        assert code == 0
        summary = json.loads((out / "f3.problem.compare.json").read_text())
        by_name = {entry["solver"]: entry for entry in summary}
        assert by_name["exhaustive"]["p_range"] == 100.0  # the oracle is always optimal
        assert by_name["exhaustive"]["best_energy"] == -35.0
        assert by_name["sa"]["best_energy"] == -35.0
        assert (out / "f3.problem.sa.cdf.csv").exists()
        assert (out / "f3.problem.exhaustive.cdf.csv").exists()
        assert "exhaustive" in capsys.readouterr().out

    def test_reference_problem_sa_vs_qaoa(self, mixed_problem_file, tmp_path):
        out = tmp_path / "cmp"
        code = run_cli(
            "compare", mixed_problem_file,
            "--solvers", "sa,qaoa", "--runs", 3, "--shots", 60, "--seed", 1,
            "--out-dir", out,
        )
        assert code == 0
        summary = json.loads((out / "mixed.problem.compare.json").read_text())
        by_name = {entry["solver"]: entry for entry in summary}
        assert by_name["sa"]["best_energy"] == -2.0
        assert by_name["qaoa"]["best_energy"] >= -2.0 - 1e-9

    def test_empty_solver_list_is_usage_error(self, f3_problem_file, tmp_path, capsys):
        assert run_cli("compare", f3_problem_file, "--solvers", ",", "--out-dir", tmp_path) == 1
        assert "at least one solver" in capsys.readouterr().err

    def test_unknown_solver_is_usage_error(self, f3_problem_file, tmp_path, capsys):
        assert run_cli("compare", f3_problem_file, "--solvers", "sa,annealer9000", "--out-dir", tmp_path) == 1
        assert "unknown solver" in capsys.readouterr().err


class TestGenerators:
    def test_knapsack_command_round_trip(self, tmp_path, capsys):
        target = tmp_path / "f3.problem.json"
        assert run_cli("knapsack", bundled_data("f3_l-d_kp_4_20.txt"), "-o", target) == 0
        assert "4 items" in capsys.readouterr().out
        reloaded = Problem.load(target)
        _, direct = load_knapsack(bundled_data("f3_l-d_kp_4_20.txt"))
        assert reloaded.to_json_dict() == direct.to_json_dict()

    def test_regression_command_round_trip(self, tmp_path):
        target = tmp_path / "iris.problem.json"
        code = run_cli(
            "regression", bundled_data("iris30.csv"),
            "--min", -0.25, "--max", 0.25, "--precision", 0.25, "-o", target,
        )
        assert code == 0
        reloaded = Problem.load(target)
        _, direct = build_regression(bundled_data("iris30.csv"), None, -0.25, 0.25, 0.25)
        assert reloaded.to_json_dict() == direct.to_json_dict()

    def test_usage_error_exit_code(self):
        assert run_cli("regression", "data.csv") == 1  # missing required range flags


class TestDeterminism:
    def test_identical_seed_identical_solution_json(self, f3_problem_file, tmp_path):
        outs = []
        for name in ("one", "two"):
            out = tmp_path / name
            code = run_cli(
                "solve", f3_problem_file, "--solver", "sa", "--runs", 25, "--seed", 99, "--out-dir", out
            )
            assert code == 0
            outs.append((out / "f3.problem.solution.json").read_bytes())
        assert outs[0] == outs[1]
