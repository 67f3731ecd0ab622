"""On-demand Wigner kernel evaluation through an analytically weighted network.

Every potential cell ``(l1, l2)`` inside the coherence window of the target
cell ``(i, j)`` is one hidden neuron with a sine activation,

    neuron = V(l1, l2) * sin(2 [(l1 - i) dx M dp + (l2 - j) dy N dp] / hbar),

and the output neuron sums the hidden layer with a single closed-form weight
(``GridSpec.output_weight``). No training is involved: weights and biases
follow from the grid and the potential.

Kernel values are only ever produced for spatial cells that hold particles.
A :class:`KernelCache` keeps one :class:`CellKernelTable` (creation rate and
momentum CDF) per occupied cell.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _accel
from ._accel import njit
from .phase_space import GridSpec, PotentialField


class KernelPoint(NamedTuple):
    i: int
    j: int
    M: int
    N: int


def _phase_steps(grid: GridSpec) -> tuple[float, float]:
    kx = 2.0 * grid.dx * grid.dp / grid.hbar
    ky = 2.0 * grid.dy * grid.dp / grid.hbar
    return kx, ky


def _window(grid: GridSpec, i: int, j: int) -> tuple[int, int, int, int]:
    """Inclusive clamped window bounds ``(lo1, hi1, lo2, hi2)``."""
    return (
        max(0, i - grid.wx), min(grid.nx - 1, i + grid.wx),
        max(0, j - grid.wy), min(grid.ny - 1, j + grid.wy),
    )


def neuron(l1: int, l2: int, point, V: float, grid: GridSpec) -> float:
    """Hidden-neuron activation for potential cell ``(l1, l2)``; zero outside the window."""
    i, j, M, N = point
    lo1, hi1, lo2, hi2 = _window(grid, i, j)
    if not (lo1 <= l1 <= hi1 and lo2 <= l2 <= hi2):
        return 0.0
    kx, ky = _phase_steps(grid)
    return V * math.sin((l1 - i) * M * kx + (l2 - j) * N * ky)


# --- single-point evaluation -------------------------------------------------

@njit
def _kernel_point_numba(values, nz_i, nz_j, i, j, M, N, wx, wy, kx, ky, weight):
    nx, ny = values.shape
    lo1 = max(0, i - wx)
    hi1 = min(nx - 1, i + wx)
    lo2 = max(0, j - wy)
    hi2 = min(ny - 1, j + wy)
    total = 0.0
    comp = 0.0
    if (hi1 - lo1 + 1) * (hi2 - lo2 + 1) <= nz_i.size:
        for l1 in range(lo1, hi1 + 1):
            for l2 in range(lo2, hi2 + 1):
                v = values[l1, l2]
                if v != 0.0:
                    term = v * np.sin((l1 - i) * M * kx + (l2 - j) * N * ky)
                    y = term - comp
                    t = total + y
                    comp = (t - total) - y
                    total = t
    else:
        for k in range(nz_i.size):
            l1 = nz_i[k]
            l2 = nz_j[k]
            if lo1 <= l1 <= hi1 and lo2 <= l2 <= hi2:
                term = values[l1, l2] * np.sin((l1 - i) * M * kx + (l2 - j) * N * ky)
                y = term - comp
                t = total + y
                comp = (t - total) - y
                total = t
    return weight * total


def _kernel_point_numpy(values, nz_i, nz_j, i, j, M, N, wx, wy, kx, ky, weight):
    nx, ny = values.shape
    lo1, hi1 = max(0, i - wx), min(nx - 1, i + wx)
    lo2, hi2 = max(0, j - wy), min(ny - 1, j + wy)
    inside = (nz_i >= lo1) & (nz_i <= hi1) & (nz_j >= lo2) & (nz_j <= hi2)
    l1 = nz_i[inside]
    l2 = nz_j[inside]
    terms = values[l1, l2] * np.sin((l1 - i) * M * kx + (l2 - j) * N * ky)
    return weight * math.fsum(terms.tolist())


def kernel_value(point, potential: PotentialField, grid: GridSpec, backend: str | None = None) -> float:
    """Kernel ``V_W(i, j; M, N)`` (1/s) evaluated through the network."""
    i, j, M, N = (int(v) for v in point)
    kx, ky = _phase_steps(grid)
    nz_i, nz_j = potential.nonzero
    fn = _select(backend, _kernel_point_numba, _kernel_point_numpy)
    return float(fn(potential.values, nz_i, nz_j, i, j, M, N,
                    grid.wx, grid.wy, kx, ky, grid.output_weight))


def _select(backend, numba_fn, numpy_fn):
    if backend is None:
        backend = _accel.backend_name()
    if backend == "numba":
        if not _accel.HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return numba_fn
    if backend == "numpy":
        return numpy_fn
    raise ValueError(f"unknown backend {backend!r}")


# --- whole-cell evaluation ---------------------------------------------------

class _SineBank:
    """sin/cos of ``offset * M * k`` for every window offset and momentum index."""

    def __init__(self, grid: GridSpec):
        kx, ky = _phase_steps(grid)
        mx = np.arange(-grid.np_x, grid.np_x + 1)[:, None]
        ox = np.arange(-grid.wx, grid.wx + 1)[None, :]
        my = np.arange(-grid.np_y, grid.np_y + 1)[:, None]
        oy = np.arange(-grid.wy, grid.wy + 1)[None, :]
        ax = (mx * ox) * kx
        ay = (my * oy) * ky
        self.sx, self.cx = np.sin(ax), np.cos(ax)
        self.sy, self.cy = np.sin(ay), np.cos(ay)


_BANKS: dict[GridSpec, _SineBank] = {}


def _bank(grid: GridSpec) -> _SineBank:
    bank = _BANKS.get(grid)
    if bank is None:
        if len(_BANKS) > 8:
            _BANKS.clear()
        bank = _BANKS[grid] = _SineBank(grid)
    return bank


def cell_kernel(cell, potential: PotentialField, grid: GridSpec) -> np.ndarray:
    """All momentum values of the kernel at one spatial cell, shape ``(2np_x+1, 2np_y+1)``.

    This is the network forward pass batched over every momentum input. With
    ``sin(a + b) = sin a cos b + cos a sin b`` the hidden layer factors into
    per-axis sine/cosine banks, so the weighted neuron sum becomes two small
    matrix products over the potential window.
    """
    i, j = cell
    lo1, hi1, lo2, hi2 = _window(grid, i, j)
    window = potential.values[lo1:hi1 + 1, lo2:hi2 + 1]
    rows = np.flatnonzero(np.any(window != 0.0, axis=1))
    if rows.size == 0:
        return np.zeros((grid.n_mx, grid.n_my))
    cols = np.flatnonzero(np.any(window != 0.0, axis=0))
    sub = window[np.ix_(rows, cols)]
    bank = _bank(grid)
    ox = rows + (lo1 - i + grid.wx)
    oy = cols + (lo2 - j + grid.wy)
    sx, cx = bank.sx[:, ox], bank.cx[:, ox]
    sy, cy = bank.sy[:, oy], bank.cy[:, oy]
    out = sx @ sub @ cy.T
    out += cx @ sub @ sy.T
    out *= grid.output_weight
    return out


def gamma(cell, potential: PotentialField, grid: GridSpec) -> float:
    """Pair-creation rate (1/s): momentum sum of the positive kernel part."""
    values = cell_kernel(cell, potential, grid)
    return math.fsum(values[values > 0.0].tolist())


# --- tables, sampling, cache ---------------------------------------------------

@dataclass
class CellKernelTable:
    cell: tuple
    gamma: float
    cdf: np.ndarray
    built_potential_version: int
    np_x: int
    np_y: int

    @property
    def nbytes(self) -> int:
        return int(self.cdf.nbytes)


def _table_from_values(cell, values: np.ndarray, version: int, grid: GridSpec, out=None):
    flat = values.ravel()
    pos = np.where(flat > 0.0, flat, 0.0)
    g = math.fsum(pos[pos > 0.0].tolist())
    if g <= 0.0:
        return CellKernelTable(tuple(cell), 0.0, np.empty(0), version, grid.np_x, grid.np_y)
    cdf = np.cumsum(pos, out=out)
    cdf /= cdf[-1]
    # clamp the tail so entries past the last positive value equal 1 exactly
    last = int(np.flatnonzero(pos)[-1])
    cdf[last:] = 1.0
    return CellKernelTable(tuple(cell), g, cdf, version, grid.np_x, grid.np_y)


def build_cell_table(cell, potential: PotentialField, grid: GridSpec) -> CellKernelTable:
    """Rate and row-major (M then N) cumulative distribution of ``V_W+ / gamma``."""
    return _table_from_values(cell, cell_kernel(cell, potential, grid), potential.version, grid)


def sample_momentum(table: CellKernelTable, u: float) -> tuple[int, int]:
    """Inverse-CDF draw; ``u`` on a CDF boundary maps to the higher entry."""
    assert table.gamma > 0.0, "sampling from a cell with zero creation rate"
    k = int(np.searchsorted(table.cdf, u, side="right"))
    k = min(k, table.cdf.size - 1)
    n_my = 2 * table.np_y + 1
    return k // n_my - table.np_x, k % n_my - table.np_y


class KernelCache:
    """Per-cell tables for the current potential version.

    CDF rows live in one slab so compiled kernels can index them by slot.
    ``retention`` bounds how many tables from earlier steps survive
    :meth:`end_step` (``None`` keeps all, which suits static potentials).
    """

    def __init__(self, grid: GridSpec, retention: int | None = None, initial_slots: int = 64):
        self.grid = grid
        self.retention = retention
        self.potential_version = None
        self.tables: OrderedDict = OrderedDict()
        self.slot_of: dict = {}
        self._slab = np.empty((max(1, initial_slots), grid.n_momentum))
        self._free: list[int] = list(range(self._slab.shape[0] - 1, -1, -1))
        self._touched: set = set()
        self.hits = 0
        self.builds = 0
        self.evictions = 0
        self.invalidations = 0
        self.cells_built: set = set()
        self.peak_tables = 0
        self.peak_table_bytes = 0
        self.peak_slab_bytes = self._slab.nbytes
        # flat-cell index bookkeeping for bulk lookups (not kernel storage)
        self._known = np.zeros(grid.n_cells, dtype=bool)
        self._rate_of = np.zeros(grid.n_cells)
        self._slot_arr = np.full(grid.n_cells, -1, dtype=np.int64)

    @property
    def slab(self) -> np.ndarray:
        return self._slab

    @property
    def table_bytes(self) -> int:
        return len(self.slot_of) * self.grid.n_momentum * 8

    def __len__(self) -> int:
        return len(self.tables)

    def clear(self):
        self._known[:] = False
        self._slot_arr[:] = -1
        self.tables.clear()
        self.slot_of.clear()
        self._touched.clear()
        self._free = list(range(self._slab.shape[0] - 1, -1, -1))

    def _grow(self):
        old = self._slab
        cap = old.shape[0]
        new_cap = min(max(cap + 64, (cap * 5) // 4), max(cap + 1, self.grid.n_cells))
        slab = np.empty((new_cap, old.shape[1]))
        slab[:cap] = old
        self._slab = slab
        self._free.extend(range(new_cap - 1, cap - 1, -1))
        for cell, slot in self.slot_of.items():
            self.tables[cell].cdf = slab[slot]
        self.peak_slab_bytes = max(self.peak_slab_bytes, slab.nbytes)

    def _sync_version(self, potential: PotentialField):
        if self.potential_version != potential.version:
            if self.potential_version is not None:
                self.invalidations += 1
            self.clear()
            self.potential_version = potential.version

    def begin_step(self):
        self._touched = set()

    def get_or_build(self, cell, potential: PotentialField) -> CellKernelTable:
        cell = (int(cell[0]), int(cell[1]))
        self._sync_version(potential)
        self._touched.add(cell)
        table = self.tables.get(cell)
        if table is not None:
            self.hits += 1
            self.tables.move_to_end(cell)
            return table
        values = cell_kernel(cell, potential, self.grid)
        if np.any(values > 0.0):
            if not self._free:
                self._grow()
            slot = self._free.pop()
            table = _table_from_values(cell, values, potential.version, self.grid, out=self._slab[slot])
            self.slot_of[cell] = slot
        else:
            table = _table_from_values(cell, values, potential.version, self.grid)
        self.tables[cell] = table
        flat = cell[0] * self.grid.ny + cell[1]
        self._known[flat] = True
        self._rate_of[flat] = table.gamma
        self._slot_arr[flat] = self.slot_of.get(cell, -1)
        self.builds += 1
        self.cells_built.add(cell)
        self.peak_tables = max(self.peak_tables, len(self.tables))
        self.peak_table_bytes = max(self.peak_table_bytes, self.table_bytes)
        return table

    def end_step(self):
        """Evict least-recently-used tables beyond this step's cells plus retention."""
        if self.retention is None:
            return
        limit = len(self._touched) + self.retention
        while len(self.tables) > limit:
            cell, _ = self.tables.popitem(last=False)
            if cell in self._touched:  # pragma: no cover - touched cells are most recent
                raise AssertionError("evicting a table in use")
            flat = cell[0] * self.grid.ny + cell[1]
            self._known[flat] = False
            self._slot_arr[flat] = -1
            slot = self.slot_of.pop(cell, None)
            if slot is not None:
                self._free.append(slot)
            self.evictions += 1

    def lookup(self, flat_cells: np.ndarray, potential: PotentialField) -> tuple[np.ndarray, np.ndarray]:
        """Per-particle ``(rate, slot)`` for flat cell indices, building missing tables.

        Equivalent to calling :meth:`get_or_build` once per distinct cell.
        """
        occupied = np.flatnonzero(np.bincount(flat_cells, minlength=self.grid.n_cells))
        self._sync_version(potential)
        known = self._known[occupied]
        for c in occupied[~known].tolist():
            self.get_or_build(divmod(c, self.grid.ny), potential)
        hit_cells = occupied[known]
        self.hits += int(hit_cells.size)
        if self.retention is not None:
            for c in hit_cells.tolist():
                cell = divmod(c, self.grid.ny)
                self._touched.add(cell)
                self.tables.move_to_end(cell)
        return self._rate_of[flat_cells], self._slot_arr[flat_cells]

    def slot(self, cell) -> int:
        return self.slot_of.get(cell, -1)

    def stats(self) -> dict:
        return {
            "cache_hits": self.hits,
            "tables_built": self.builds,
            "tables_evicted": self.evictions,
            "cache_invalidations": self.invalidations,
            "distinct_cells_built": len(self.cells_built),
            "peak_tables": self.peak_tables,
            "peak_kernel_bytes": self.peak_table_bytes,
            "peak_slab_bytes": self.peak_slab_bytes,
            "kernel_evaluations": self.builds * self.grid.n_momentum,
        }


def get_or_build(cache: KernelCache, cell, potential: PotentialField, grid: GridSpec | None = None) -> CellKernelTable:
    if grid is not None and grid != cache.grid:
        raise ValueError("cache was created for a different grid")
    return cache.get_or_build(cell, potential)
