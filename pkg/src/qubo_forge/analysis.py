"""Decode, validate, and score solution sets; persist them as JSON.

Inequalities are checked with a tolerance of half the slack precision:
decoded values live on a grid, so an exact comparison would misclassify
boundary-feasible grid points.  Probabilities are kept as fractions
internally and only presented as percentages; every float that reaches a
file is serialized with 12 significant digits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from qubo_forge.compiler import CompileConfig, QuboModel, infer_slack_precision
from qubo_forge.problem import ConstraintDecl, Problem
from qubo_forge.solvers import SolutionSet

SOLUTION_SCHEMA = "qubo-forge-solution/1"

_EQUALITY_TOL = 1e-9


@dataclass
class ConstraintCheck:
    label: str
    satisfied: bool
    residual: float
    hardness: str
    block_index: int


@dataclass
class AnalysisReport:
    """Quality metrics for one solver's solution set."""

    valid_rate: float  # percent of runs whose best sample satisfies the hard constraints
    objective_values: list[float]
    constraint_results: list[ConstraintCheck]
    cumulative: list[tuple[float, float]]
    p_range: float | None = None
    val_ref: float | None = None
    tts: float | None = None
    t_f: float | None = None
    p_conf: float | None = None


def _comparison_result(decl: ConstraintDecl, values: dict[str, float], tolerance: float, index: int) -> ConstraintCheck:
    value = decl.comparison.lhs.evaluate(values)
    return ConstraintCheck(
        label=decl.describe(),
        satisfied=decl.comparison.holds(value, tolerance=tolerance),
        residual=decl.comparison.violation(value),
        hardness=decl.hardness,
        block_index=index,
    )


def check_constraints(
    decoded: dict[str, float],
    problem: Problem,
    include_weak: bool = False,
    config: CompileConfig | None = None,
) -> list[ConstraintCheck]:
    """Evaluate the user-declared constraints on a decoded assignment.

    Weak constraints are skipped unless ``include_weak`` is set.
    """
    results = []
    for index, decl in enumerate(problem.constraints):
        if decl.hardness == "weak" and not include_weak:
            continue
        if decl.boolean is not None:
            satisfied = decl.boolean.truth(decoded)
            results.append(
                ConstraintCheck(
                    label=decl.describe(),
                    satisfied=satisfied,
                    residual=0.0 if satisfied else 1.0,
                    hardness=decl.hardness,
                    block_index=index,
                )
            )
            continue
        tolerance = _EQUALITY_TOL
        if decl.comparison.op != "=":
            tolerance = infer_slack_precision(decl, problem, config) / 2.0
        results.append(_comparison_result(decl, decoded, tolerance, index))
    return results


def check_model_constraints(
    problem: Problem,
    model: QuboModel,
    binary: dict[str, int],
    decoded: dict[str, float] | None = None,
    config: CompileConfig | None = None,
) -> list[ConstraintCheck]:
    """Per-penalty-block results: user constraints on the decoded values,
    encoding-induced ones (one-hot, monotone chains) on the raw binaries."""
    decoded = decoded if decoded is not None else model.decode(binary)
    declarations: list[tuple[ConstraintDecl, bool]] = [(decl, False) for decl in problem.constraints]
    for plan in model.encodings:
        declarations.extend((decl, True) for decl in plan.induced)
    if len(declarations) != len(model.penalties):
        raise ValueError("model penalties do not line up with the problem's constraints")
    results = []
    for index, (decl, induced) in enumerate(declarations):
        if decl.boolean is not None:
            satisfied = decl.boolean.truth(decoded)
            results.append(
                ConstraintCheck(decl.describe(), satisfied, 0.0 if satisfied else 1.0, decl.hardness, index)
            )
        elif induced:
            results.append(_comparison_result(decl, binary, _EQUALITY_TOL, index))
        else:
            tolerance = _EQUALITY_TOL
            if decl.comparison.op != "=":
                tolerance = infer_slack_precision(decl, problem, config) / 2.0
            results.append(_comparison_result(decl, decoded, tolerance, index))
    return results


def solution_is_valid(
    problem: Problem,
    model: QuboModel,
    binary: dict[str, int],
    decoded: dict[str, float] | None = None,
    include_weak: bool = False,
) -> bool:
    results = check_model_constraints(problem, model, binary, decoded)
    return all(r.satisfied for r in results if r.hardness == "hard" or include_weak)


def valid_rate(problem: Problem, model: QuboModel, solution: SolutionSet, include_weak: bool = False) -> float:
    """Percentage of samples satisfying every hard constraint."""
    if not solution.samples:
        return 0.0
    valid = sum(
        1
        for (binary, _), decoded in zip(solution.samples, solution.decoded)
        if solution_is_valid(problem, model, binary, decoded, include_weak)
    )
    return 100.0 * valid / len(solution.samples)


def objective_values(decoded: dict[str, float], problem: Problem) -> list[float]:
    """Each declared objective evaluated in its original sense (no weight, no sign flip)."""
    return [term.expr.evaluate(decoded) for term in problem.objectives]


def p_range(energies: Sequence[float], val_ref: float) -> float:
    """Percentage of energies strictly below the reference value."""
    if not energies:
        return 0.0
    return 100.0 * sum(1 for e in energies if e < val_ref) / len(energies)


def time_to_solution(t_f: float, p_conf: float, p_range_fraction: float) -> float:
    """Expected time to reach the target with confidence ``p_conf``.

    ``t_f * ln(1 - p_conf) / ln(1 - p_range_fraction)`` with the documented
    edge conventions: +inf when the target was never reached, ``t_f`` when it
    is reached every run.
    """
    if not 0 < p_conf < 1:
        raise ValueError("p_conf must be in (0, 1)")
    if not 0 <= p_range_fraction <= 1:
        raise ValueError("p_range fraction must be in [0, 1]")
    if p_range_fraction == 0:
        return math.inf
    if p_range_fraction == 1:
        return t_f
    return t_f * math.log(1 - p_conf) / math.log(1 - p_range_fraction)


def cumulative_distribution(energies: Sequence[float]) -> list[tuple[float, float]]:
    """Sorted (energy, cumulative fraction) pairs; tied energies share the final fraction."""
    ordered = sorted(energies)
    n = len(ordered)
    pairs: list[tuple[float, float]] = []
    for k, energy in enumerate(ordered):
        fraction = (k + 1) / n
        if pairs and pairs[-1][0] == energy:
            pairs[-1] = (energy, fraction)
        else:
            pairs.append((energy, fraction))
    return pairs


def analyze(
    problem: Problem,
    model: QuboModel,
    solution: SolutionSet,
    val_ref: float | None = None,
    p_conf: float = 0.99,
    include_weak: bool = False,
) -> AnalysisReport:
    """Score a solution set: validity, best-solution checks, distribution, optional TTS."""
    report = AnalysisReport(
        valid_rate=valid_rate(problem, model, solution, include_weak),
        objective_values=objective_values(solution.best_decoded, problem),
        constraint_results=check_model_constraints(problem, model, solution.best_binary, solution.best_decoded),
        cumulative=cumulative_distribution(solution.energies),
    )
    if val_ref is not None:
        report.p_range = p_range(solution.energies, val_ref)
        report.val_ref = val_ref
        t_f = solution.mean_run_time()
        if t_f is not None:
            report.t_f = t_f
            report.p_conf = p_conf
            report.tts = time_to_solution(t_f, p_conf, report.p_range / 100.0)
    return report


# -- persistence ---------------------------------------------------------------


def _round_floats(value: Any) -> Any:
    """Normalize every float to 12 significant digits (idempotent)."""
    if isinstance(value, float):
        return value if math.isinf(value) or math.isnan(value) else float(f"{value:.12g}")
    if isinstance(value, dict):
        return {key: _round_floats(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round_floats(item) for item in value]
    return value


def solution_to_dict(solution: SolutionSet) -> dict[str, Any]:
    return {
        "samples": [{"assignment": assignment, "energy": energy} for assignment, energy in solution.samples],
        "decoded": solution.decoded,
        "best_binary": solution.best_binary,
        "best_decoded": solution.best_decoded,
        "best_energy": solution.best_energy,
        "run_times": solution.run_times,
    }


def solution_from_dict(data: dict[str, Any]) -> SolutionSet:
    return SolutionSet(
        samples=[(entry["assignment"], entry["energy"]) for entry in data["samples"]],
        decoded=data["decoded"],
        best_binary=data["best_binary"],
        best_decoded=data["best_decoded"],
        best_energy=data["best_energy"],
        run_times=data.get("run_times"),
    )


def report_to_dict(report: AnalysisReport) -> dict[str, Any]:
    return {
        "valid_rate": report.valid_rate,
        "objective_values": report.objective_values,
        "constraints": [
            {
                "label": check.label,
                "satisfied": check.satisfied,
                "residual": check.residual,
                "hardness": check.hardness,
                "block_index": check.block_index,
            }
            for check in report.constraint_results
        ],
        "cumulative": [[energy, fraction] for energy, fraction in report.cumulative],
        "p_range": report.p_range,
        "val_ref": report.val_ref,
        "tts": None if report.tts is None else (report.tts if math.isfinite(report.tts) else "inf"),
        "t_f": report.t_f,
        "p_conf": report.p_conf,
    }


def report_from_dict(data: dict[str, Any]) -> AnalysisReport:
    tts = data.get("tts")
    if tts == "inf":
        tts = math.inf
    return AnalysisReport(
        valid_rate=data["valid_rate"],
        objective_values=data["objective_values"],
        constraint_results=[
            ConstraintCheck(
                label=entry["label"],
                satisfied=entry["satisfied"],
                residual=entry["residual"],
                hardness=entry["hardness"],
                block_index=entry["block_index"],
            )
            for entry in data["constraints"]
        ],
        cumulative=[(energy, fraction) for energy, fraction in data["cumulative"]],
        p_range=data.get("p_range"),
        val_ref=data.get("val_ref"),
        tts=tts,
        t_f=data.get("t_f"),
        p_conf=data.get("p_conf"),
    )


def save_report(
    path: str | Path,
    solution: SolutionSet,
    report: AnalysisReport | None = None,
    meta: dict[str, Any] | None = None,
) -> None:
    """Persist a solution set (and optional report) as versioned JSON."""
    payload = {
        "schema": SOLUTION_SCHEMA,
        "solution": solution_to_dict(solution),
        "report": None if report is None else report_to_dict(report),
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(_round_floats(payload), indent=2, sort_keys=True) + "\n")


def load_report(path: str | Path) -> tuple[SolutionSet, AnalysisReport | None, dict[str, Any]]:
    data = json.loads(Path(path).read_text())
    schema = data.get("schema")
    if schema != SOLUTION_SCHEMA:
        raise ValueError(f"unsupported solution schema {schema!r}; expected {SOLUTION_SCHEMA!r}")
    solution = solution_from_dict(data["solution"])
    report = None if data.get("report") is None else report_from_dict(data["report"])
    return solution, report, data.get("meta", {})


def write_cumulative_csv(path: str | Path, cumulative: Sequence[tuple[float, float]]) -> None:
    """Plot data for one solver: ``energy,cumulative_fraction`` rows."""
    lines = ["energy,cumulative_fraction"]
    for energy, fraction in cumulative:
        lines.append(f"{energy:.12g},{fraction:.12g}")
    Path(path).write_text("\n".join(lines) + "\n")
