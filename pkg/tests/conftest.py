import math

import pytest

from startomo.image import gaussian_bump

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def bump256():
    """Smooth test phantom: sigma 0.12 at (0.2, 0.1) on n = 256, L = 1."""
    return gaussian_bump((0.2, 0.1), 0.12, 256, 1.0)


@pytest.fixture(scope="session")
def bump128():
    return gaussian_bump((0.2, 0.1), 0.12, 128, 1.0)


def deg(x):
    return math.degrees(x)
