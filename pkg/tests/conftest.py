import numpy as np
import pytest

from fpsi.mesh import build_rectangle_coupled_mesh

ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def unit_pair():
    """Unit squares above and below y = 0, one cell each way."""
    return build_rectangle_coupled_mesh((0.0, 1.0, -1.0, 1.0), 0.0, 1, 1, 1)


@pytest.fixture
def small_pair():
    return build_rectangle_coupled_mesh((0.0, 1.0, -1.0, 1.0), 0.0, 4, 4, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
