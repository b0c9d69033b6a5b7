"""Optimize a compiled QUBO: exhaustive oracle, simulated annealing, QAOA.

All solvers share the same contract: they take a ``QuboModel`` and
``SolverParams`` and return a ``SolutionSet`` holding one sample per run
(the exhaustive oracle instead reports the k best assignments of the full
landscape).  Reported energies always re-evaluate exactly from their
assignments.  Results are deterministic for a fixed seed; stochastic
solvers derive per-run generators from ``seed + run_index``.

The penalty-weight retry loop lives here too: compile, solve, check the
hard constraints on the best solution, and grow the violated constraints'
weights (sequential / scaled / binary-search) until the solution is valid
or the trial budget runs out.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from qubo_forge.compiler import CompileConfig, QuboModel, compile_problem
from qubo_forge.problem import Problem

EXHAUSTIVE_DEFAULT_CAP = 26
QAOA_MAX_BINARIES = 16

_CHUNK_BITS = 18  # exhaustive enumeration works in blocks of 2**18 assignments


@dataclass
class SolverParams:
    """Shared solver settings; SA and QAOA read their own subset."""

    runs: int = 10
    seed: int = 0
    record_time: bool = False
    # simulated annealing
    sweeps: int = 1000
    beta_start: float = 0.1
    beta_end: float = 10.0
    beta_autoscale: bool = True
    # qaoa statevector simulation
    layers: int = 2
    shots: int = 200
    max_optimizer_iters: int = 400
    initial_angles: Sequence[float] | None = None
    # exhaustive
    exhaustive_cap: int = EXHAUSTIVE_DEFAULT_CAP
    k_best: int = 1000

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if not self.beta_start < self.beta_end:
            raise ValueError("beta_start must be below beta_end")
        if self.layers < 1:
            raise ValueError("QAOA needs at least one layer")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")


@dataclass
class SolutionSet:
    """Samples with energies, their decodings, and the best of each."""

    samples: list[tuple[dict[str, int], float]]
    decoded: list[dict[str, float]]
    best_binary: dict[str, int]
    best_decoded: dict[str, float]
    best_energy: float
    run_times: list[float] | None = None

    @property
    def energies(self) -> list[float]:
        return [energy for _, energy in self.samples]

    def mean_run_time(self) -> float | None:
        if not self.run_times:
            return None
        return sum(self.run_times) / len(self.run_times)


@dataclass
class UpdateStrategy:
    """How to grow penalty weights between retry trials."""

    kind: str = "sequential"
    lambda_max: float = 1e9
    max_trials: int = 5

    def __post_init__(self):
        if self.kind not in ("sequential", "scaled", "binary-search"):
            raise ValueError(f"unknown update strategy {self.kind!r}")
        if self.max_trials < 1:
            raise ValueError("max_trials must be >= 1")


@dataclass
class LambdaUpdateResult:
    solution: SolutionSet
    model: QuboModel
    lambdas: list[float]
    trials: int
    valid: bool


# -- shared helpers ------------------------------------------------------------


def _model_arrays(model: QuboModel) -> tuple[list[str], np.ndarray, list[tuple[int, int, float]]]:
    order = model.binary_variables()
    position = {name: k for k, name in enumerate(order)}
    linear = np.zeros(len(order))
    couplers: list[tuple[int, int, float]] = []
    for mono, coeff in model.quadratic.terms.items():
        if len(mono) == 1:
            linear[position[mono[0]]] += coeff
        else:
            couplers.append((position[mono[0]], position[mono[1]], coeff))
    return order, linear, couplers


def _chunk_energies(indices: np.ndarray, n: int, linear: np.ndarray, couplers, offset: float) -> np.ndarray:
    bits = ((indices[:, None] >> np.arange(n)) & 1).astype(np.float64)
    energies = bits @ linear + offset
    for i, j, coeff in couplers:
        energies += coeff * bits[:, i] * bits[:, j]
    return energies


def _assignment_from_index(index: int, order: list[str]) -> dict[str, int]:
    return {name: (index >> k) & 1 for k, name in enumerate(order)}


def _finalize(model: QuboModel, entries: list[tuple[dict[str, int], float]], run_times) -> SolutionSet:
    decoded = [model.decode(assignment) for assignment, _ in entries]
    best_index = min(range(len(entries)), key=lambda i: entries[i][1])
    return SolutionSet(
        samples=entries,
        decoded=decoded,
        best_binary=entries[best_index][0],
        best_decoded=decoded[best_index],
        best_energy=entries[best_index][1],
        run_times=run_times,
    )


# -- exhaustive oracle -----------------------------------------------------------


def solve_exhaustive(model: QuboModel, params: SolverParams | None = None) -> SolutionSet:
    """Enumerate all assignments; the oracle every stochastic solver is checked against."""
    params = params or SolverParams()
    order, linear, couplers = _model_arrays(model)
    n = len(order)
    if n > params.exhaustive_cap:
        raise ValueError(f"exhaustive solver handles at most {params.exhaustive_cap} binaries, model has {n}")
    started = time.monotonic()
    k_best = max(1, min(params.k_best, 2**n))
    top_indices = np.empty(0, dtype=np.int64)
    top_energies = np.empty(0)
    for start in range(0, 2**n, 2**_CHUNK_BITS):
        stop = min(start + 2**_CHUNK_BITS, 2**n)
        indices = np.arange(start, stop, dtype=np.int64)
        energies = _chunk_energies(indices, n, linear, couplers, model.offset)
        merged_idx = np.concatenate([top_indices, indices])
        merged_en = np.concatenate([top_energies, energies])
        keep = np.argsort(merged_en, kind="stable")[:k_best]
        top_indices, top_energies = merged_idx[keep], merged_en[keep]
    entries = []
    for index, energy in zip(top_indices, top_energies):
        assignment = _assignment_from_index(int(index), order)
        entries.append((assignment, model.energy(assignment)))
    elapsed = time.monotonic() - started
    run_times = [elapsed] if params.record_time else None
    return _finalize(model, entries, run_times)


# -- simulated annealing ------------------------------------------------------------


def solve_sa(model: QuboModel, params: SolverParams | None = None) -> SolutionSet:
    """Single-flip Metropolis under a geometric inverse-temperature schedule.

    One independent run per ``params.runs``; each run starts from a random
    assignment and reports its best-seen state.
    """
    params = params or SolverParams()
    order, linear, couplers = _model_arrays(model)
    n = len(order)

    neighbors: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for i, j, coeff in couplers:
        neighbors[i].append((j, coeff))
        neighbors[j].append((i, coeff))

    scale = 1.0
    if params.beta_autoscale:
        magnitudes = [abs(c) for c in model.quadratic.terms.values()]
        scale = max(magnitudes) if magnitudes else 1.0
    if params.sweeps > 1:
        ratio = (params.beta_end / params.beta_start) ** (1.0 / (params.sweeps - 1))
        betas = [params.beta_start * ratio**t / scale for t in range(params.sweeps)]
    else:
        betas = [params.beta_end / scale]

    entries: list[tuple[dict[str, int], float]] = []
    run_times: list[float] | None = [] if params.record_time else None
    for run in range(params.runs):
        rng = np.random.default_rng(params.seed + run)
        started = time.monotonic()
        state = rng.integers(0, 2, size=n).tolist() if n else []
        energy = model.energy(dict(zip(order, state)))
        best_state, best_energy = list(state), energy
        for beta in betas:
            for i in range(n):
                sign = 1 - 2 * state[i]
                delta = linear[i]
                for j, coeff in neighbors[i]:
                    delta += coeff * state[j]
                delta *= sign
                if delta <= 0.0 or rng.random() < math.exp(-beta * delta):
                    state[i] = 1 - state[i]
                    energy += delta
                    if energy < best_energy:
                        best_energy = energy
                        best_state = list(state)
        assignment = dict(zip(order, best_state))
        entries.append((assignment, model.energy(assignment)))
        if run_times is not None:
            run_times.append(time.monotonic() - started)
    return _finalize(model, entries, run_times)


# -- qaoa statevector simulation -----------------------------------------------------


def _apply_mixer(amplitudes: np.ndarray, n: int, beta: float) -> np.ndarray:
    cos, sin = math.cos(beta), math.sin(beta)
    for k in range(n):
        shaped = amplitudes.reshape(2 ** (n - k - 1), 2, 2**k)
        low, high = shaped[:, 0, :], shaped[:, 1, :]
        shaped[:, 0, :], shaped[:, 1, :] = cos * low - 1j * sin * high, cos * high - 1j * sin * low
    return amplitudes


def _qaoa_state(phase: np.ndarray, n: int, angles: np.ndarray) -> np.ndarray:
    amplitudes = np.full(2**n, 2 ** (-n / 2), dtype=np.complex128)
    layers = len(angles) // 2
    for layer in range(layers):
        gamma, beta = angles[2 * layer], angles[2 * layer + 1]
        amplitudes = amplitudes * np.exp(-1j * gamma * phase)
        amplitudes = _apply_mixer(amplitudes, n, beta)
    return amplitudes


def _qaoa_distribution(model: QuboModel, params: SolverParams) -> tuple[list[str], np.ndarray, np.ndarray, float]:
    """Optimize the 2p angles and return (order, energies, probabilities, expectation)."""
    order, linear, couplers = _model_arrays(model)
    n = len(order)
    if n > QAOA_MAX_BINARIES:
        raise ValueError(f"QAOA simulation handles at most {QAOA_MAX_BINARIES} binaries, model has {n}")

    indices = np.arange(2**n, dtype=np.int64)
    energies = _chunk_energies(indices, n, linear, couplers, model.offset) if n else np.array([model.offset])
    # Centering is a global phase; scaling only conditions the angle search.
    centered = energies - energies.mean()
    spread = np.max(np.abs(centered))
    phase = centered / spread if spread > 0 else np.zeros_like(centered)

    def expectation(angles: np.ndarray) -> float:
        amplitudes = _qaoa_state(phase, n, angles)
        return float(np.abs(amplitudes) ** 2 @ energies)

    p = params.layers
    if params.initial_angles is not None:
        starts = [np.asarray(params.initial_angles, dtype=float)]
        if starts[0].shape != (2 * p,):
            raise ValueError(f"initial_angles needs {2 * p} values (gamma, beta per layer)")
    else:
        starts = []
        for gamma_max, beta_max in ((0.6, 0.8), (1.2, 0.5), (2.4, 1.1)):
            angles = np.empty(2 * p)
            for layer in range(p):
                angles[2 * layer] = gamma_max * (layer + 1) / p  # annealing-style ramps
                angles[2 * layer + 1] = beta_max * (1 - layer / p)
            starts.append(angles)

    best_angles, best_value, converged = starts[0], math.inf, False
    for start in starts:
        result = minimize(
            expectation,
            start,
            method="Nelder-Mead",
            options={"maxiter": params.max_optimizer_iters, "xatol": 1e-4, "fatol": 1e-7},
        )
        converged = converged or bool(result.success)
        if result.fun < best_value:
            best_value, best_angles = float(result.fun), result.x
    if not converged:
        warnings.warn("QAOA angle search did not converge; using best-seen angles")

    amplitudes = _qaoa_state(phase, n, best_angles)
    probabilities = np.abs(amplitudes) ** 2
    probabilities = probabilities / probabilities.sum()
    return order, energies, probabilities, best_value


def qaoa_expected_energy(model: QuboModel, params: SolverParams | None = None) -> float:
    """Expected energy of the optimized QAOA state (before sampling)."""
    return _qaoa_distribution(model, params or SolverParams())[3]


def solve_qaoa_sim(model: QuboModel, params: SolverParams | None = None) -> SolutionSet:
    """Statevector QAOA: alternating diagonal-cost and single-qubit-mixer layers.

    The 2p angles are tuned with Nelder-Mead restarts from fixed ramp
    initializations, then each run samples ``shots`` bitstrings from the
    optimized state and keeps its best.  The model offset is folded into the
    reported energies, not the phase operator.
    """
    params = params or SolverParams()
    order, energies, probabilities, _ = _qaoa_distribution(model, params)

    entries: list[tuple[dict[str, int], float]] = []
    run_times: list[float] | None = [] if params.record_time else None
    for run in range(params.runs):
        rng = np.random.default_rng(params.seed + run)
        started = time.monotonic()
        drawn = rng.choice(len(probabilities), size=params.shots, p=probabilities)
        best_index = int(drawn[np.argmin(energies[drawn])])
        assignment = _assignment_from_index(best_index, order)
        entries.append((assignment, model.energy(assignment)))
        if run_times is not None:
            run_times.append(time.monotonic() - started)
    return _finalize(model, entries, run_times)


SOLVERS: dict[str, Callable[[QuboModel, SolverParams], SolutionSet]] = {
    "exhaustive": solve_exhaustive,
    "sa": solve_sa,
    "qaoa": solve_qaoa_sim,
}


def solve(model: QuboModel, solver: str, params: SolverParams | None = None) -> SolutionSet:
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; expected one of {sorted(SOLVERS)}")
    return SOLVERS[solver](model, params)


# -- penalty-weight retry loop ----------------------------------------------------


def next_lambda(current: float, strategy: UpdateStrategy) -> float:
    """One update step; rounding follows the worked formulas, capped at lambda_max."""
    if strategy.kind == "sequential":
        raw = current * 10.0
    elif strategy.kind == "scaled":
        exponent = 1.0 / (strategy.max_trials - 1) if strategy.max_trials > 1 else 1.0
        raw = _round_half_away(current * strategy.lambda_max**exponent)
    else:
        raw = _round_half_away(math.sqrt(current * strategy.lambda_max))
    if raw <= current:
        raw = current * 10.0  # rounding collapsed the step (tiny lambdas); keep growing
    return min(raw, strategy.lambda_max)


def _round_half_away(value: float) -> float:
    return math.floor(value + 0.5) if value >= 0 else math.ceil(value - 0.5)


def solve_with_lambda_update(
    problem: Problem,
    config: CompileConfig,
    solver: str,
    params: SolverParams | None = None,
    strategy: UpdateStrategy | None = None,
    include_weak: bool = False,
    update_all: bool = False,
) -> LambdaUpdateResult:
    """Compile / solve / check loop that grows penalty weights until valid.

    Each trial solves the compiled model and checks the hard constraints on
    the best solution; if any are violated, their weights (or all weights,
    with ``update_all``) are increased and the problem is recompiled with the
    new values as manual lambdas.  Trial exhaustion is reported through the
    ``valid`` flag rather than raised.
    """
    from qubo_forge.analysis import check_model_constraints  # local import avoids a cycle

    params = params or SolverParams()
    strategy = strategy or UpdateStrategy()
    model = compile_problem(problem, config)
    trials = 0
    while True:
        trials += 1
        solution = solve(model, solver, params)
        results = check_model_constraints(problem, model, solution.best_binary, solution.best_decoded)
        violated = [
            r.block_index
            for r in results
            if not r.satisfied and (r.hardness == "hard" or include_weak)
        ]
        if not violated or trials >= strategy.max_trials:
            return LambdaUpdateResult(
                solution=solution,
                model=model,
                lambdas=model.lambdas(),
                trials=trials,
                valid=not violated,
            )
        lambdas = model.lambdas()
        targets = range(len(lambdas)) if update_all else violated
        for index in targets:
            if lambdas[index] < strategy.lambda_max:
                lambdas[index] = next_lambda(lambdas[index], strategy)
        retry_config = replace(config, lambda_method="manual", manual_lambdas=lambdas)
        model = compile_problem(problem, retry_config)
