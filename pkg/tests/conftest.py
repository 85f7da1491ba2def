import numpy as np
import pytest

from phientropy.calculus import heat, ornstein_uhlenbeck
from phientropy.measures import gauss_hermite
from phientropy.semigroups import HeatSemigroup, OrnsteinUhlenbeckSemigroup


@pytest.fixture(scope="session")
def ou():
    return OrnsteinUhlenbeckSemigroup()


@pytest.fixture(scope="session")
def heat_sg():
    return HeatSemigroup()


@pytest.fixture(scope="session")
def gauss():
    return gauss_hermite(200)


@pytest.fixture(scope="session")
def L_ou():
    return ornstein_uhlenbeck(1)


@pytest.fixture(scope="session")
def L_heat():
    return heat(1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_log(request):
    lines = {}
    request.config._acceptance_lines = lines
    return lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
