import numpy as np
import pytest

from lqturnpike.scenarios import example_cone, example_rotation_box


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ex1():
    return example_rotation_box()


@pytest.fixture(scope="session")
def ex2():
    return example_cone()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
