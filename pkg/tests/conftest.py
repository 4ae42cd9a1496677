import numpy as np
import pytest

from modcl import _kernels
from modcl.fixtures import example_label_space, example_requirements
from modcl.requirements import parse_labelspace, parse_requirements

from helpers import ACCEPTANCE_LINES

BACKENDS = ["pure"]
try:
    _kernels.get_backend("compiled")
    BACKENDS.append("compiled")
except ImportError:
    pass


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def road_ls():
    return example_label_space()


@pytest.fixture(scope="session")
def road_rs():
    return example_requirements()


@pytest.fixture
def tiny_ls():
    return parse_labelspace("a1 agent\na2 agent\nact1 action\n")


@pytest.fixture
def tiny_rs(tiny_ls):
    return parse_requirements("a1 | a2\n!act1 | a1\n", tiny_ls)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
