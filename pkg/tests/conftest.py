import pytest

from qubo_forge import Problem


@pytest.fixture
def mixed_problem() -> Problem:
    """One binary, one discrete, one log-encoded continuous variable, one inequality.

    Minimize a + b*c + c**2 subject to b + c >= 2; the constrained optimum is
    (a, b, c) = (0, 3, -1) with value -2.
    """
    problem = Problem()
    problem.add_binary_variable("a")
    problem.add_discrete_variable("b", [-1, 1, 3])
    problem.add_continuous_variable("c", -2, 2, 0.25)
    problem.add_objective("a + b*c + c**2")
    problem.add_constraint("b + c >= 2")
    return problem.freeze()


@pytest.fixture
def tiny_knapsack() -> Problem:
    """Two items, p = (5, 10), w = (2, 3), capacity 4; optimum picks item 2."""
    problem = Problem()
    problem.add_binary_variables_array("obj", [2])
    problem.add_objective("5*obj_0 + 10*obj_1", direction="maximize")
    problem.add_constraint("2*obj_0 + 3*obj_1 <= 4")
    return problem.freeze()
