import numpy as np
import pytest

from mini_sns.integrator import resolve_noise
from mini_sns.operators import assemble_level


@pytest.fixture(scope="session")
def noise():
    return resolve_noise("default")


@pytest.fixture(scope="session")
def ops2(noise):
    return assemble_level(2, noise)


@pytest.fixture(scope="session")
def ops3(noise):
    return assemble_level(3, noise)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one PASS/FAIL line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
