import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cusplab.geometry import FlatTorusMetric
from cusplab.grid import RadialGrid

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid20():
    return RadialGrid(20.0, 0.01)


@pytest.fixture(scope="session")
def grid5():
    return RadialGrid(5.0, 0.01)


@pytest.fixture(scope="session")
def square():
    return FlatTorusMetric.square()


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, recorded by the tests themselves."""
    lines = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            if getattr(rep, "when", None) == "call":
                lines += [v for k, v in getattr(rep, "user_properties", ()) if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0].lstrip("#"))):
            terminalreporter.write_line(line)
