import numpy as np
import pytest

from stableharnack.density import unit_density_grid
from stableharnack.green import green_profile
from stableharnack.model import SpectralMeasure, StableModel, cauchy_model

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def report_criterion():
    """Record and print one pass/fail line per acceptance criterion."""
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def _aniso_density(xi):
    return 1.0 + 0.5 * xi[..., 0] ** 2


@pytest.fixture(scope="session")
def cauchy():
    return cauchy_model(2)


@pytest.fixture(scope="session")
def aniso():
    """f_mu proportional to 1 + 0.5 cos^2(theta) in the plane, alpha = 1."""
    return StableModel(2, 1.0, SpectralMeasure.from_density(_aniso_density, 1.5,
                                                            expression="1 + 0.5*cos(theta)**2"))


@pytest.fixture(scope="session")
def atomic_cross():
    dirs = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
    return StableModel(2, 1.0, SpectralMeasure.atomic(dirs, [0.5] * 4))


@pytest.fixture(scope="session")
def cauchy_grid(cauchy):
    return unit_density_grid(cauchy)


@pytest.fixture(scope="session")
def aniso_grid(aniso):
    return unit_density_grid(aniso)


@pytest.fixture(scope="session")
def cauchy_profile(cauchy, cauchy_grid):
    return green_profile(cauchy, cauchy_grid)


@pytest.fixture(scope="session")
def aniso_profile(aniso, aniso_grid):
    return green_profile(aniso, aniso_grid)


def cauchy_pdf_2d(x):
    """Density at time 1 of the planar process with Phi(u) = |u|."""
    x = np.asarray(x, dtype=float)
    return 1.0 / (2 * np.pi) * (1.0 + np.sum(x * x, axis=-1)) ** -1.5
