import numpy as np
import pytest

from nets import scalar_pair, small_multitask
from nspe.network import paper_network


@pytest.fixture
def scalar_net():
    return scalar_pair()


@pytest.fixture
def multitask_net():
    return small_multitask()


@pytest.fixture(scope="session")
def paper_net():
    return paper_network()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
