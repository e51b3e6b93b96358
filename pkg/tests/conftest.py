import time

import numpy as np
import pytest

from sweepopt.optimizer import OptimizerConfig, optimize

from sweepopt.switching_example import example_problem

_ACCEPTANCE_LINES = []


@pytest.fixture
def example():
    return example_problem(-3.0)


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE_LINES.append


@pytest.fixture(scope="session")
def optimized_example():
    """Three-segment search at alpha = -3 on the 4000-step mesh, with its wall time."""
    start = time.perf_counter()
    result = optimize(example_problem(-3.0), OptimizerConfig(segments=3, k=4000, seed=0))
    return result, time.perf_counter() - start


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
