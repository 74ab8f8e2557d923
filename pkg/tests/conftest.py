import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dnlce import clusters
from dnlce.lattice import LatticeSpec

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def square():
    return LatticeSpec.from_name("square")


@pytest.fixture(scope="session")
def cubic():
    return LatticeSpec.from_name("cubic")


@pytest.fixture(scope="session")
def chain():
    return LatticeSpec.from_name("chain")


@pytest.fixture(scope="session")
def square_set(square):
    return clusters.build_cluster_set(square, 8)


@pytest.fixture(scope="session")
def cubic_set(cubic):
    return clusters.build_cluster_set(cubic, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[number])
