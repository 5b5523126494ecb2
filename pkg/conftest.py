import pytest

from esdmix.models import TestProblem as ProblemSpec, build_test_problem
from esdmix.solver import SolverConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def config():
    return SolverConfig()


@pytest.fixture
def mp_half():
    return build_test_problem(ProblemSpec(kind="mp", gamma=0.5, dimension=100))


@pytest.fixture
def two_delta_half():
    return build_test_problem(ProblemSpec(kind="two_delta", gamma=0.5, lambdas=[1.0, 8.0],
                                          weights=[0.5, 0.5], dimension=2, min_dimension=2))
