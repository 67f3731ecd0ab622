import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signedwigner.errors import ConfigError
from signedwigner.phase_space import (
    HBAR, NM, OUTSIDE, PhysicalConstants, PotentialField, build_grid, locate_cell, locate_cells,
    make_step_barrier, zero_potential,
)


def test_dp_identity(oracle):
    g = build_grid(100, 100, 1 * NM, 1 * NM, 100 * NM)
    assert g.dp == pytest.approx(oracle["dp_lc100nm"], rel=1e-14)
    assert g.dp * g.lc == pytest.approx(math.pi * HBAR, rel=1e-15)


def test_window_half_width(oracle):
    g = build_grid(100, 100, 1 * NM, 1 * NM, 100 * NM)
    assert g.wx == g.wy == oracle["window_dx1_lc100"]


def test_default_momentum_range_and_1d():
    g = build_grid(40, 20, 1 * NM, 1 * NM, 20 * NM)
    assert (g.np_x, g.np_y) == (20, 10)
    g1 = build_grid(40, 1, 1 * NM, 1 * NM, 20 * NM)
    assert g1.dim == 1 and g1.np_y == 0 and g1.wy == 0 and g1.n_my == 1


@pytest.mark.parametrize("kwargs", [
    dict(lc=0.0), dict(lc=-1e-9), dict(nx=0), dict(dx=0.0), dict(lc=float("nan")),
    dict(lc=1e-10),  # window below one cell
])
def test_build_grid_rejects(kwargs):
    args = dict(nx=10, ny=10, dx=1 * NM, dy=1 * NM, lc=10 * NM)
    args.update(kwargs)
    with pytest.raises(ConfigError):
        build_grid(**args)


def test_constants_validated():
    with pytest.raises(ConfigError):
        PhysicalConstants(mass=0.0)
    with pytest.raises(ConfigError):
        PhysicalConstants(hbar=-1.0)


def test_locate_cell_examples():
    g = build_grid(10, 10, 1 * NM, 1 * NM, 10 * NM)
    assert locate_cell(g, 0.0, 0.0) == (0, 0)
    assert locate_cell(g, g.lx, 0.0) is OUTSIDE
    assert locate_cell(g, 1.5 * g.dx, 2.5 * g.dy) == (1, 2)
    assert locate_cell(g, -1e-30, 0.0) is OUTSIDE


@settings(max_examples=200, deadline=None)
@given(st.floats(-2e-9, 12e-9), st.floats(-2e-9, 12e-9))
def test_locate_cells_matches_scalar(x, y):
    g = build_grid(10, 10, 1 * NM, 1 * NM, 10 * NM)
    i, j, inside = locate_cells(g, np.array([x]), np.array([y]))
    scalar = locate_cell(g, x, y)
    if scalar is OUTSIDE:
        assert not inside[0]
    else:
        assert inside[0] and (i[0], j[0]) == scalar


def test_potential_is_immutable_and_zero_extended():
    p = PotentialField(np.ones((3, 4)))
    with pytest.raises(ValueError):
        p.values[0, 0] = 2.0
    assert p.at(-1, 0) == 0.0 and p.at(3, 0) == 0.0 and p.at(2, 3) == 1.0
    with pytest.raises(ConfigError):
        PotentialField(np.array([[np.inf]]))


def test_potential_versions_unique():
    a = PotentialField(np.zeros((2, 2)))
    b = PotentialField(np.zeros((2, 2)))
    c = a.with_values(np.ones((2, 2)))
    assert len({a.version, b.version, c.version}) == 3


def test_step_barrier_examples(oracle):
    g = build_grid(40, 40, 1 * NM, 1 * NM, 10 * NM)
    assert not np.any(make_step_barrier(g, 0.0, (20 * NM, 20 * NM)).values)
    v = make_step_barrier(g, 1.0, (g.lx / 2, 0.0)).values
    xc, _ = g.cell_centers()
    assert np.array_equal(v == 1.0, xc >= g.lx / 2)
    oblique = make_step_barrier(g, 1.0, (20.3 * NM, 17.9 * NM), math.radians(45))
    assert int(oblique.values.sum()) == oracle["barrier45_cells_40x40"]


def test_step_barrier_point_outside():
    g = build_grid(10, 10, 1 * NM, 1 * NM, 10 * NM)
    with pytest.raises(ConfigError):
        make_step_barrier(g, 1.0, (20 * NM, 5 * NM))


def test_zero_potential_shape():
    g = build_grid(7, 3, 1 * NM, 1 * NM, 2 * NM)
    assert zero_potential(g).shape == (7, 3)


def test_dense_bytes_formula(oracle):
    g = build_grid(100, 100, 1 * NM, 1 * NM, 100 * NM)
    assert (g.n_mx, g.n_my) == (101, 101)
    assert g.dense_kernel_bytes() == oracle["dense_bytes_100x100_101x101"]
