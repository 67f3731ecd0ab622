import json
import sys
from pathlib import Path

import numpy as np
import pytest

from signedwigner.phase_space import EV, NM, PhysicalConstants, PotentialField, build_grid

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="session")
def oracle():
    return json.loads((Path(__file__).parent / "oracle_values.json").read_text())


def small_grid(nx=16, ny=16, d=2.0, lc=None, np_x=None, np_y=None, mass_me=0.067):
    c = PhysicalConstants(mass=mass_me * 9.1093837015e-31)
    lc = (lc if lc is not None else nx * d) * NM
    return build_grid(nx, ny, d * NM, d * NM, lc, c, np_x=np_x, np_y=np_y)


def random_potential(grid, rng, density=0.3, scale_ev=0.1):
    """Sparse random potential; some entries negative."""
    mask = rng.random((grid.nx, grid.ny)) < density
    values = np.where(mask, rng.uniform(-0.5, 1.0, (grid.nx, grid.ny)) * scale_ev * EV, 0.0)
    return PotentialField(values)


def random_points(grid, rng, n):
    return np.column_stack([
        rng.integers(0, grid.nx, n), rng.integers(0, grid.ny, n),
        rng.integers(-grid.np_x, grid.np_x + 1, n), rng.integers(-grid.np_y, grid.np_y + 1, n),
    ])


@pytest.fixture
def grid16():
    return small_grid()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
