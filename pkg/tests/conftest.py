import numpy as np
import pytest

from gdnls.acceptance import Context
from gdnls.grid import GridSpec
from gdnls.soliton import SolitonParams, build_profile

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ctx():
    """Degenerate point (1.5, 1, c*) on N=2048, L=80, plus the N=512 coercivity grid."""
    return Context(seed=0)


@pytest.fixture(scope="session")
def grid():
    return GridSpec(80.0, 2048)


@pytest.fixture(scope="session")
def profile0(grid):
    return build_profile(SolitonParams(1.5, 1.0, 0.0), grid)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_field(rng, grid, width=5.0, band=0.05):
    # |u|^(2 sigma) is only finitely smooth at zeros of u, so keep test fields well resolved
    f = (rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)) * np.exp(-(grid.x / width) ** 2)
    fh = np.fft.fft(f)
    fh[~grid.dealias_mask(band)] = 0
    return np.fft.ifft(fh)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
