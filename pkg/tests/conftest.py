import numpy as np
import pytest

from infharm.mesh import make_structured_mesh


@pytest.fixture(scope="session")
def mesh8():
    return make_structured_mesh(8)


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
