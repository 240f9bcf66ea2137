import sys

import numpy as np
import pytest

from lieforge.groups import get_group, random_pair
from lieforge.netgen import build_base_net
from lieforge.words import ElementTuple

GROUPS = ("su2", "so3", "sl2r", "sl3r")


def make_pair(name, seed=7):
    gs = get_group(name)
    return ElementTuple(gs, random_pair(gs, seed))


@pytest.fixture(scope="session")
def su2_pair():
    return make_pair("su2")


@pytest.fixture(scope="session")
def so3_pair():
    return make_pair("so3")


@pytest.fixture(scope="session")
def sl2r_pair():
    return make_pair("sl2r")


@pytest.fixture(scope="session")
def so3_small_net(so3_pair):
    return build_base_net(so3_pair, 6, samples=2000)


@pytest.fixture(scope="session")
def sl2r_small_net(sl2r_pair):
    return build_base_net(sl2r_pair, 6, samples=1000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance lines at the end of the run, in criterion order."""
    results = {}
    for name, mod in list(sys.modules.items()):
        if name.endswith("test_acceptance"):
            results.update(getattr(mod, "RESULTS", {}))
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
