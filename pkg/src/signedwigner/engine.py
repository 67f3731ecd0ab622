"""Time stepping, initial conditions, observables and run driver."""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SimulationAbort
from .kernel_net import KernelCache
from .particles import (
    Ensemble,
    absorb_boundary,
    annihilate,
    create_pairs,
    drift_ensemble,
)
from .phase_space import GridSpec, PhysicalConstants, PotentialField, locate_cells

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InitialCondition:
    x0: float
    y0: float
    p0x: float
    p0y: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma!r}")


@dataclass(frozen=True)
class BarrierGeometry:
    """Interface through ``point`` with unit normal at ``angle`` (radians) pointing into the barrier."""

    point: tuple
    angle: float = 0.0

    def side(self, x, y):
        return (x - self.point[0]) * math.cos(self.angle) + (y - self.point[1]) * math.sin(self.angle)


@dataclass
class SimConfig:
    grid: GridSpec
    potential: PotentialField
    constants: PhysicalConstants
    ic: InitialCondition
    dt: float
    t_end: float
    snapshot_times: tuple = ()
    n_init: int = 100_000
    annihilation_period: int = 1
    seed: int = 0
    max_particles: int = 10_000_000
    gamma_dt_guard: float = 10.0
    cache_retention: int | None = None
    workers: int = 1
    barrier: BarrierGeometry | None = None
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.t_end < 0:
            raise ConfigError("t_end must be non-negative")
        if self.n_init < 1:
            raise ConfigError("n_init must be at least 1")
        if self.annihilation_period < 1:
            raise ConfigError("annihilation_period must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        for t in self.snapshot_times:
            if t < 0 or t > self.t_end * (1 + 1e-12):
                raise ConfigError(f"snapshot time {t!r} s outside [0, t_end]")
        if self.potential.shape != (self.grid.nx, self.grid.ny):
            raise ConfigError("potential shape does not match the grid")


@dataclass
class DensityGrid:
    values: np.ndarray
    time: float
    step: int = 0

    @property
    def total(self) -> float:
        return float(self.values.sum())


@dataclass
class SimState:
    ensemble: Ensemble
    clock: float
    step_index: int
    rngs: list
    cache: KernelCache
    n_init: int
    max_gamma_dt: float = 0.0
    peak_particles: int = 0
    history: list = field(default_factory=list)

    @property
    def rng(self) -> np.random.Generator:
        return self.rngs[0]


def make_rngs(seed: int, workers: int = 1) -> list[np.random.Generator]:
    """One PCG64 stream per worker, derived from ``(seed, worker_index)``."""
    return [np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), w])))
            for w in range(workers)]


# --- initial condition -----------------------------------------------------------

def initial_wigner(ic: InitialCondition, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Separable Gaussian Wigner function on the grid: ``(spatial, momentum)`` factors."""
    xc, yc = grid.cell_centers()
    r2 = (xc - ic.x0) ** 2
    if grid.dim == 2:
        r2 = r2 + (yc - ic.y0) ** 2
    spatial = np.exp(-r2 / ic.sigma**2)
    M = np.arange(-grid.np_x, grid.np_x + 1)[:, None] * grid.dp
    N = np.arange(-grid.np_y, grid.np_y + 1)[None, :] * grid.dp
    q2 = (M - ic.p0x) ** 2
    if grid.dim == 2:
        q2 = q2 + (N - ic.p0y) ** 2
    momentum = np.exp(-q2 * ic.sigma**2 / grid.hbar**2)
    return spatial, momentum


def _inverse_cdf(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(weights.ravel())
    cdf /= cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)


def sample_initial(ic: InitialCondition, grid: GridSpec, n_init: int, rng: np.random.Generator) -> Ensemble:
    """Draw ``n_init`` signed particles from the Gaussian packet on the grid."""
    margin = 3 * ic.sigma
    if (ic.x0 < margin or ic.x0 > grid.lx - margin
            or (grid.dim == 2 and (ic.y0 < margin or ic.y0 > grid.ly - margin))):
        warnings.warn("wave packet lies within 3 sigma of the domain boundary", stacklevel=2)
    spatial, momentum = initial_wigner(ic, grid)
    if not (np.any(spatial) and np.any(momentum)):
        raise ConfigError("initial Wigner function vanishes on the grid")
    cell = _inverse_cdf(np.abs(spatial), rng.random(n_init))
    mom = _inverse_cdf(np.abs(momentum), rng.random(n_init))
    i, j = np.divmod(cell, grid.ny)
    x = (i + rng.random(n_init)) * grid.dx
    y = (j + rng.random(n_init)) * grid.dy if grid.dim == 2 else np.full(n_init, 0.5 * grid.dy)
    M, N = np.divmod(mom, grid.n_my)
    sign = np.sign(spatial.ravel()[cell] * momentum.ravel()[mom]).astype(np.int8)
    return Ensemble(x, y, M - grid.np_x, N - grid.np_y, sign)


# --- observables ----------------------------------------------------------------------

def density(ens: Ensemble, grid: GridSpec, n_init: int, t: float = 0.0, step: int = 0) -> DensityGrid:
    """Signed particle count per spatial cell divided by ``n_init``."""
    values = np.zeros(grid.n_cells)
    if len(ens):
        i, j, inside = locate_cells(grid, ens.x, ens.y)
        flat = (i * grid.ny + j)[inside]
        values = np.bincount(flat, weights=ens.sign[inside].astype(np.float64), minlength=grid.n_cells)
    return DensityGrid(values.reshape(grid.nx, grid.ny) / n_init, t, step)


def free_packet_moments(ic: InitialCondition, t: float, constants: PhysicalConstants):
    """Exact means and variances of the freely evolving Gaussian packet."""
    if t < 0:
        raise ValueError("t must be non-negative")
    spread = (constants.hbar * t / (constants.mass * ic.sigma)) ** 2 / 2
    var = ic.sigma**2 / 2 + spread
    return (ic.x0 + ic.p0x / constants.mass * t, ic.y0 + ic.p0y / constants.mass * t, var, var)


def reflection_metrics(snapshot: DensityGrid, grid: GridSpec, barrier: BarrierGeometry) -> tuple[float, float]:
    """Signed weight on the incident side and on the barrier side of the interface."""
    xc, yc = grid.cell_centers()
    behind = barrier.side(xc, yc) >= 0.0
    transmitted = math.fsum(snapshot.values[behind].tolist())
    reflected = math.fsum(snapshot.values[~behind].tolist())
    return reflected, transmitted


def reflection_errors(ens: Ensemble, grid: GridSpec, barrier: BarrierGeometry, n_init: int) -> tuple[float, float]:
    """Monte Carlo standard errors of :func:`reflection_metrics` (particle counts per side)."""
    i, j, inside = locate_cells(grid, ens.x, ens.y)
    cx, cy = (i + 0.5) * grid.dx, (j + 0.5) * grid.dy
    behind = barrier.side(cx, cy) >= 0.0
    n_t = int((inside & behind).sum())
    n_r = int((inside & ~behind).sum())
    return math.sqrt(n_r) / n_init, math.sqrt(n_t) / n_init


# --- stepping ------------------------------------------------------------------------------

def init_state(config: SimConfig) -> SimState:
    rngs = make_rngs(config.seed, config.workers)
    ens = sample_initial(config.ic, config.grid, config.n_init, rngs[0])
    cache = KernelCache(config.grid, retention=config.cache_retention)
    return SimState(ens, 0.0, 0, rngs, cache, config.n_init, peak_particles=len(ens))


def step(state: SimState, config: SimConfig, backend: str | None = None) -> SimState:
    """Advance one time step: tables, creation, drift, absorption, annihilation."""
    grid = config.grid
    ens = state.ensemble
    cache = state.cache
    cache.begin_step()

    rates = np.zeros(len(ens))
    slots = np.full(len(ens), -1, dtype=np.int64)
    if len(ens) and np.any(config.potential.values):
        i, j, _ = locate_cells(grid, ens.x, ens.y)
        flat = i * grid.ny + j
        rates, slots = cache.lookup(flat, config.potential)
        if rates.size:
            state.max_gamma_dt = max(state.max_gamma_dt, float(rates.max()) * config.dt)
        create_pairs(ens, rates, slots, cache.slab, config.dt, state.rngs, grid,
                     guard=config.gamma_dt_guard, backend=backend)
    cache.end_step()

    drift_ensemble(ens, config.dt, grid, config.constants)
    absorb_boundary(ens, grid, side=config.barrier.side if config.barrier is not None else None)
    state.step_index += 1
    if state.step_index % config.annihilation_period == 0:
        annihilate(ens, grid, backend=backend)
    state.clock = state.step_index * config.dt
    state.peak_particles = max(state.peak_particles, len(ens))
    if len(ens) > config.max_particles:
        raise SimulationAbort(
            f"{len(ens)} particles exceed max_particles={config.max_particles} at t={state.clock:.3e} s; "
            "annihilate more often or reduce dt"
        )
    return state


def snapshot_steps(config: SimConfig) -> list[int]:
    """Last step not exceeding each requested time."""
    return [int(math.floor(t / config.dt + 1e-9)) for t in config.snapshot_times]


def run(config: SimConfig, backend: str | None = None, progress=None):
    """Run to ``t_end``; returns ``(snapshots, report)``.

    With no snapshot times configured, a single snapshot at ``t_end`` is taken.
    """
    t0 = time.perf_counter()
    state = init_state(config)
    n_steps = int(math.floor(config.t_end / config.dt + 1e-9))
    wanted = snapshot_steps(config) if config.snapshot_times else [n_steps]
    pending = sorted(set(wanted))
    snapshots: dict[int, DensityGrid] = {}
    weights = {}

    def take():
        ens = state.ensemble
        snap = density(ens, config.grid, config.n_init, state.clock, state.step_index)
        snapshots[state.step_index] = snap
        weights[state.step_index] = {
            "time_s": state.clock,
            "in_domain_net_weight": ens.net_weight,
            "absorbed_weight": ens.absorbed_weight,
            "particles": len(ens),
        }
        if config.barrier is not None:
            r, t = reflection_metrics(snap, config.grid, config.barrier)
            er, et = reflection_errors(ens, config.grid, config.barrier, config.n_init)
            behind = ens.absorbed_weight_behind
            front = ens.absorbed_weight - behind
            weights[state.step_index].update(
                reflected_weight=r, transmitted_weight=t, reflected_stderr=er, transmitted_stderr=et,
                reflected_total=r + front / config.n_init, transmitted_total=t + behind / config.n_init,
                reflected_total_stderr=math.hypot(er, math.sqrt(ens.absorbed - ens.absorbed_behind) / config.n_init),
                transmitted_total_stderr=math.hypot(et, math.sqrt(ens.absorbed_behind) / config.n_init))

    if pending and pending[0] == 0:
        take()
    while state.step_index < n_steps:
        step(state, config, backend=backend)
        if state.step_index in pending:
            take()
        if progress is not None:
            progress(state)
    ordered = [snapshots[s] for s in wanted]
    report = {
        "steps": state.step_index,
        "final_time_s": state.clock,
        "n_init": config.n_init,
        "final_particles": len(state.ensemble),
        "peak_particles": state.peak_particles,
        "max_gamma_dt": state.max_gamma_dt,
        "in_domain_net_weight": state.ensemble.net_weight,
        **state.ensemble.counters(),
        **state.cache.stats(),
        "dense_kernel_bytes": config.grid.dense_kernel_bytes(),
        "momentum_cells": config.grid.n_momentum,
        "snapshots": [weights[s] for s in wanted],
        "wall_time_s": time.perf_counter() - t0,
    }
    report["final_state"] = state
    return ordered, report
