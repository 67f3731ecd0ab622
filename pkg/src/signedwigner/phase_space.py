"""Units, discretized phase-space geometry and potential fields.

Everything is stored in SI double precision. Helpers convert from the
nm / fs / eV units used in configuration files.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

HBAR = 1.054571817e-34  # J s
ELECTRON_MASS = 9.1093837015e-31  # kg
EV = 1.602176634e-19  # J
NM = 1e-9
FS = 1e-15

OUTSIDE = None


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = HBAR
    mass: float = ELECTRON_MASS

    def __post_init__(self):
        if not (self.hbar > 0 and math.isfinite(self.hbar)):
            raise ConfigError(f"hbar must be positive, got {self.hbar!r}")
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ConfigError(f"mass must be positive, got {self.mass!r}")


@dataclass(frozen=True)
class GridSpec:
    """Spatial cells, momentum index ranges and the coherence window.

    A grid with ``ny == 1`` is one-dimensional: the y momentum range and the
    y window collapse to zero and kernels use the 1D output weight.
    """

    nx: int
    ny: int
    dx: float
    dy: float
    lc: float
    np_x: int
    np_y: int
    dp: float
    wx: int
    wy: int
    hbar: float

    @property
    def dim(self) -> int:
        return 1 if self.ny == 1 else 2

    @property
    def lx(self) -> float:
        return self.nx * self.dx

    @property
    def ly(self) -> float:
        return self.ny * self.dy

    @property
    def n_mx(self) -> int:
        return 2 * self.np_x + 1

    @property
    def n_my(self) -> int:
        return 2 * self.np_y + 1

    @property
    def n_momentum(self) -> int:
        return self.n_mx * self.n_my

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def output_weight(self) -> float:
        """Weight of every hidden neuron feeding the kernel output."""
        if self.dim == 1:
            return -2.0 * self.dx / (self.hbar * self.lc)
        return -2.0 * self.dx * self.dy / (self.hbar * self.lc * self.lc)

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (i + 0.5) * self.dx, (j + 0.5) * self.dy

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid (indexing='ij') of cell-center coordinates."""
        xc = (np.arange(self.nx) + 0.5) * self.dx
        yc = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(xc, yc, indexing="ij")

    def momentum_index(self, flat: int) -> tuple[int, int]:
        """Row-major flat momentum index -> (M, N)."""
        return flat // self.n_my - self.np_x, flat % self.n_my - self.np_y

    def flat_momentum(self, M: int, N: int) -> int:
        return (M + self.np_x) * self.n_my + (N + self.np_y)

    def dense_kernel_bytes(self) -> int:
        return self.nx * self.ny * self.n_momentum * 8


def _half_width(lc: float, d: float) -> int:
    return int(math.floor(lc / (2.0 * d) + 0.5))


def build_grid(
    nx: int,
    ny: int,
    dx: float,
    dy: float,
    lc: float,
    constants: PhysicalConstants | None = None,
    np_x: int | None = None,
    np_y: int | None = None,
) -> GridSpec:
    """Build the phase-space grid; ``dp * lc == pi * hbar``.

    Momentum half-ranges default to half the cell count along each axis.
    """
    constants = constants or PhysicalConstants()
    for name, value in (("nx", nx), ("ny", ny)):
        if int(value) != value or value < 1:
            raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    nx, ny = int(nx), int(ny)
    one_d = ny == 1
    for name, value in (("dx", dx), ("dy", dy), ("lc", lc)):
        if not (math.isfinite(value) and value > 0):
            raise ConfigError(f"{name} must be positive, got {value!r}")
    extent = nx * dx if one_d else min(nx * dx, ny * dy)
    if lc > extent * (1 + 1e-12):
        raise ConfigError(f"coherence length {lc!r} m exceeds the domain extent {extent!r} m")

    wx = _half_width(lc, dx)
    wy = 0 if one_d else _half_width(lc, dy)
    if wx < 1 or (not one_d and wy < 1):
        raise ConfigError("coherence length is shorter than two cells")
    if np_x is None:
        np_x = nx // 2
    if np_y is None:
        np_y = 0 if one_d else ny // 2
    if np_x < 0 or np_y < 0:
        raise ConfigError("momentum half-ranges must be non-negative")
    if one_d and np_y != 0:
        raise ConfigError("a 1D grid (ny == 1) has no y momentum range")

    dp = math.pi * constants.hbar / lc
    return GridSpec(
        nx=nx, ny=ny, dx=float(dx), dy=float(dy), lc=float(lc),
        np_x=int(np_x), np_y=int(np_y), dp=dp, wx=wx, wy=wy, hbar=constants.hbar,
    )


def locate_cell(grid: GridSpec, x: float, y: float = 0.0):
    """Cell containing ``(x, y)`` in the half-open domain, or ``OUTSIDE`` (None)."""
    if not (0.0 <= x < grid.lx):
        return OUTSIDE
    if grid.dim == 2 and not (0.0 <= y < grid.ly):
        return OUTSIDE
    i = min(int(math.floor(x / grid.dx)), grid.nx - 1)
    j = 0 if grid.dim == 1 else min(int(math.floor(y / grid.dy)), grid.ny - 1)
    return i, j


def locate_cells(grid: GridSpec, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`locate_cell`; returns ``(i, j, inside)``."""
    inside = (x >= 0.0) & (x < grid.lx)
    if grid.dim == 2:
        inside &= (y >= 0.0) & (y < grid.ly)
    i = np.minimum(np.floor(x / grid.dx), grid.nx - 1).astype(np.int64)
    if grid.dim == 2:
        j = np.minimum(np.floor(y / grid.dy), grid.ny - 1).astype(np.int64)
    else:
        j = np.zeros_like(i)
    return i, j, inside


_VERSIONS = itertools.count(1)


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Piece-wise constant potential, one value (J) per spatial cell.

    Queries outside the grid return exactly zero. The array is made
    read-only; ``version`` tags a specific potential for kernel caches and
    is unique per instance unless given explicitly.
    """

    values: np.ndarray
    version: int | None = None
    nonzero: tuple = field(init=False, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ConfigError("potential must be a 2D array (nx, ny)")
        if not np.all(np.isfinite(values)):
            raise ConfigError("potential contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if self.version is None:
            object.__setattr__(self, "version", next(_VERSIONS))
        li, lj = np.nonzero(values)
        object.__setattr__(self, "nonzero", (li.astype(np.int64), lj.astype(np.int64)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def at(self, i: int, j: int) -> float:
        nx, ny = self.values.shape
        if 0 <= i < nx and 0 <= j < ny:
            return float(self.values[i, j])
        return 0.0

    def with_values(self, values: np.ndarray) -> "PotentialField":
        """New field with a fresh version tag (time-dependent potentials)."""
        return PotentialField(values)


def zero_potential(grid: GridSpec) -> PotentialField:
    return PotentialField(np.zeros((grid.nx, grid.ny)))


def make_step_barrier(
    grid: GridSpec,
    height: float,
    point: tuple[float, float],
    angle: float = 0.0,
) -> PotentialField:
    """Step potential: ``height`` on the half-plane ``(c - point) . n >= 0``.

    ``angle`` (radians) is the direction of the interface normal ``n`` that
    points into the barrier; ``angle = 0`` is a vertical interface with the
    barrier on the right. Cells are assigned by their center.
    """
    if not math.isfinite(height):
        raise ConfigError(f"barrier height must be finite, got {height!r}")
    px, py = point
    if not (0.0 <= px <= grid.lx) or (grid.dim == 2 and not (0.0 <= py <= grid.ly)):
        raise ConfigError("barrier interface point lies outside the domain")
    xc, yc = grid.cell_centers()
    side = (xc - px) * math.cos(angle) + (yc - py) * math.sin(angle)
    return PotentialField(np.where(side >= 0.0, float(height), 0.0))
