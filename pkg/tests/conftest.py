import numpy as np
import pytest

from epbp.bench import generate_observations
from epbp.mesh import default_mesh
from epbp.model import make_grid_mrf, make_tree_mrf


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid_mrf():
    return make_grid_mrf(generate_observations(9, 0))


@pytest.fixture(scope="session")
def tree_mrf():
    return make_tree_mrf(generate_observations(8, 100))


@pytest.fixture(scope="session")
def grid_mesh(grid_mrf):
    return default_mesh(grid_mrf.observations)


@pytest.fixture(scope="session")
def tree_mesh(tree_mrf):
    return default_mesh(tree_mrf.observations)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def report(request):
    """Record one acceptance line: ``report(number, passed, detail)``."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number, passed, detail):
        lines.append((number, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = sorted(config.stash.get(_ACCEPTANCE, []))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in lines:
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
