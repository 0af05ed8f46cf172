import numpy as np
import pytest

from pnsdg.mesh import build_initial_grid, refine_red
from pnsdg.spaces import DGSpace


@pytest.fixture(scope="session")
def mesh0():
    return build_initial_grid()


@pytest.fixture(scope="session")
def mesh1(mesh0):
    return refine_red(mesh0)


@pytest.fixture(scope="session")
def mesh2(mesh1):
    return refine_red(mesh1)


@pytest.fixture(scope="session")
def space0(mesh0):
    return DGSpace(mesh0)


@pytest.fixture(scope="session")
def space1(mesh1):
    return DGSpace(mesh1)


@pytest.fixture(scope="session")
def space2(mesh2):
    return DGSpace(mesh2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
