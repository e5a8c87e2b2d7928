import numpy as np
import pytest

from dislocscale.core import make_sinusoidal_potential, stress_from_spec
from dislocscale.dd import build_flux_table
from dislocscale.pn import solve_layer


@pytest.fixture(scope="session")
def pot():
    return make_sinusoidal_potential()


@pytest.fixture(scope="session")
def layer(pot):
    return solve_layer(pot, half_width=100.0, h=0.05)


@pytest.fixture(scope="session")
def sine_table():
    """Small flux table for sigma = 0.2 sin(2 pi x), used by the dd tests."""
    return build_flux_table([0.5, 1.0, 1.5], np.linspace(-1.0, 1.0, 17), stress_from_spec("sine:0.2"), tolerance=1e-7)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
