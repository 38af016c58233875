import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from otanneal import GibbsReference1D, builtin_potential, builtin_schedule  # noqa: E402

settings.register_profile(
    "suite", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def double_well():
    return builtin_potential("double_well", 1)


@pytest.fixture(scope="session")
def dw_schedule():
    return builtin_schedule("quadratic", (0.25, 25.0))


@pytest.fixture(scope="session")
def dw_reference(double_well, dw_schedule):
    return GibbsReference1D(double_well, dw_schedule)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
