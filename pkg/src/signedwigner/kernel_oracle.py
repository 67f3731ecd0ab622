"""Brute-force kernel: the discretized double sum evaluated literally.

Kept deliberately naive and free of any code shared with ``kernel_net`` so
the two can check each other. Also provides the dense 4D table that the
on-demand evaluation replaces, with exact memory accounting.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import MemoryCapExceeded
from .phase_space import GridSpec, PotentialField

DEFAULT_MEM_CAP = 4 * 1024**3


def _zero_extended(values: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    nx, ny = values.shape
    ok = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
    out = np.zeros(i.shape)
    out[ok] = values[i[ok], j[ok]]
    return out


def _terms(point, potential: PotentialField, grid: GridSpec):
    i, j, M, N = (int(v) for v in point)
    m = np.arange(-grid.wx, grid.wx + 1)[:, None]
    n = np.arange(-grid.wy, grid.wy + 1)[None, :]
    m, n = np.broadcast_arrays(m, n)
    diff = (_zero_extended(potential.values, i + m, j + n)
            - _zero_extended(potential.values, i - m, j - n))
    phase = 2.0 * (m * grid.dx * M * grid.dp + n * grid.dy * N * grid.dp) / grid.hbar
    if grid.dim == 1:
        pref = -grid.dx / (grid.hbar * grid.lc)
    else:
        pref = -grid.dx * grid.dy / (grid.hbar * grid.lc**2)
    return phase, diff, pref


def kernel_bruteforce(point, potential: PotentialField, grid: GridSpec) -> float:
    phase, diff, pref = _terms(point, potential, grid)
    return float(pref * np.sum(np.sin(phase) * diff))


def kernel_scale(point, potential: PotentialField, grid: GridSpec) -> float:
    """Largest magnitude the kernel could have at ``point``: the sum of |potential differences|.

    Rounding errors are judged against this. The kernel itself can be many
    orders smaller where the terms cancel, or where every sine is a rounded
    multiple of pi.
    """
    _, diff, pref = _terms(point, potential, grid)
    return float(abs(pref) * np.sum(np.abs(diff)))


@dataclass
class DenseKernel:
    values: np.ndarray
    memory_bytes: int
    build_seconds: float


def dense_bytes(grid: GridSpec) -> int:
    return grid.nx * grid.ny * (2 * grid.np_x + 1) * (2 * grid.np_y + 1) * 8


def precompute_dense(potential: PotentialField, grid: GridSpec, mem_cap_bytes: int = DEFAULT_MEM_CAP) -> DenseKernel:
    """Full ``(nx, ny, 2np_x+1, 2np_y+1)`` table, refused above ``mem_cap_bytes``."""
    need = dense_bytes(grid)
    if need > mem_cap_bytes:
        raise MemoryCapExceeded(need, mem_cap_bytes)
    t0 = time.perf_counter()
    values = np.empty((grid.nx, grid.ny, 2 * grid.np_x + 1, 2 * grid.np_y + 1))
    if not np.any(potential.values):
        values.fill(0.0)
    else:
        for i in range(grid.nx):
            for j in range(grid.ny):
                for a, M in enumerate(range(-grid.np_x, grid.np_x + 1)):
                    for b, N in enumerate(range(-grid.np_y, grid.np_y + 1)):
                        values[i, j, a, b] = kernel_bruteforce((i, j, M, N), potential, grid)
    return DenseKernel(values, int(values.nbytes), time.perf_counter() - t0)
