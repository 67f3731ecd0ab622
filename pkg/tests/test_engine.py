import math

import numpy as np
import pytest

from conftest import small_grid
from signedwigner.engine import (
    BarrierGeometry, DensityGrid, InitialCondition, SimConfig, density, free_packet_moments, init_state,
    make_rngs, reflection_metrics, run, sample_initial, snapshot_steps, step,
)
from signedwigner.errors import ConfigError, SimulationAbort
from signedwigner.particles import Ensemble, SignedParticle
from signedwigner.phase_space import (
    ELECTRON_MASS, EV, FS, HBAR, NM, PhysicalConstants, PotentialField, build_grid, make_step_barrier,
    zero_potential,
)

ME = PhysicalConstants(mass=ELECTRON_MASS)


def packet_config(potential=None, grid=None, **kw):
    grid = grid or build_grid(60, 60, 1 * NM, 1 * NM, 60 * NM)
    p0 = math.sqrt(2 * ME.mass * 0.025 * EV)
    ic = InitialCondition(30 * NM, 30 * NM, p0, 0.0, 6 * NM)
    args = dict(grid=grid, potential=potential or zero_potential(grid), constants=ME, ic=ic,
                dt=1 * FS, t_end=10 * FS, n_init=20000, seed=5)
    args.update(kw)
    return SimConfig(**args)


def test_free_moments_examples(oracle):
    ic = InitialCondition(40 * NM, 50 * NM, 2e-26, -1e-26, 10 * NM)
    assert free_packet_moments(ic, 0.0, ME) == (ic.x0, ic.y0, ic.sigma**2 / 2, ic.sigma**2 / 2)
    still = InitialCondition(40 * NM, 50 * NM, 0.0, 0.0, 10 * NM)
    assert free_packet_moments(still, 3e-13, ME)[:2] == (still.x0, still.y0)
    _, _, var, _ = free_packet_moments(ic, 150 * FS, ME)
    assert var == pytest.approx(oracle["free_var_sigma10_t150_me"], rel=1e-13)
    with pytest.raises(ValueError):
        free_packet_moments(ic, -1.0, ME)


def test_sample_initial_statistics():
    g = build_grid(100, 100, 1 * NM, 1 * NM, 100 * NM)
    p0 = math.sqrt(2 * ME.mass * 0.025 * EV)
    sigma, n = 10 * NM, 100_000
    ic = InitialCondition(45 * NM, 52 * NM, p0, 0.0, sigma)
    ens = sample_initial(ic, g, n, np.random.default_rng(1))
    assert len(ens) == n and np.all(ens.sign == 1)
    se_x = sigma / math.sqrt(2 * n)
    assert abs(ens.x.mean() - ic.x0) < 4 * se_x
    assert abs(ens.y.mean() - ic.y0) < 4 * se_x
    se_p = HBAR / (sigma * math.sqrt(2 * n))
    assert abs(ens.M.mean() * g.dp - p0) < 4 * se_p
    assert abs(ens.N.mean() * g.dp) < 4 * se_p


def test_sample_initial_warns_near_boundary():
    g = build_grid(40, 40, 1 * NM, 1 * NM, 40 * NM)
    ic = InitialCondition(5 * NM, 20 * NM, 0.0, 0.0, 5 * NM)
    with pytest.warns(UserWarning):
        sample_initial(ic, g, 10, np.random.default_rng(0))


def test_density_examples():
    g = small_grid(8, 8)
    assert not np.any(density(Ensemble.empty(), g, 10).values)
    d = density(Ensemble.from_particles([SignedParticle(3.1e-9, 5.5e-9, 0, 0, 1)]), g, 10)
    assert d.values[1, 2] == 0.1 and d.values.sum() == 0.1


def test_initial_density_close_to_marginal():
    g = build_grid(50, 50, 1 * NM, 1 * NM, 50 * NM)
    ic = InitialCondition(25 * NM, 24 * NM, 0.0, 0.0, 8 * NM)
    n = 50_000
    d = density(sample_initial(ic, g, n, np.random.default_rng(2)), g, n)
    xc, yc = g.cell_centers()
    analytic = np.exp(-((xc - ic.x0) ** 2 + (yc - ic.y0) ** 2) / ic.sigma**2)
    analytic /= analytic.sum()
    assert np.abs(d.values - analytic).sum() <= 5 * math.sqrt(g.n_cells / n)


def test_config_validation():
    with pytest.raises(ConfigError):
        packet_config(dt=0.0)
    with pytest.raises(ConfigError):
        packet_config(snapshot_times=(20 * FS,))
    with pytest.raises(ConfigError):
        packet_config(n_init=0)


def test_snapshot_alignment():
    cfg = packet_config(dt=0.1 * FS, t_end=150 * FS, snapshot_times=(50 * FS, 100 * FS, 150 * FS))
    assert snapshot_steps(cfg) == [500, 1000, 1500]


def test_t_end_zero_gives_initial_density():
    cfg = packet_config(t_end=0.0)
    snaps, report = run(cfg)
    assert len(snaps) == 1 and report["steps"] == 0
    init = density(sample_initial(cfg.ic, cfg.grid, cfg.n_init, make_rngs(cfg.seed)[0]), cfg.grid, cfg.n_init)
    assert np.array_equal(snaps[0].values, init.values)


def test_zero_potential_is_pure_drift():
    cfg = packet_config()
    state = init_state(cfg)
    x0, M0 = state.ensemble.x.copy(), state.ensemble.M.copy()
    step(state, cfg)
    ens = state.ensemble
    assert ens.created_pairs == 0 and ens.annihilated == 0
    assert ens.absorbed == 0
    assert np.array_equal(ens.x, x0 + (M0 * cfg.grid.dp / cfg.constants.mass) * cfg.dt)


def test_two_step_determinism():
    g = small_grid()
    V = make_step_barrier(g, 0.02 * EV, (20 * NM, 0.0))
    runs = []
    for _ in range(2):
        cfg = packet_config(potential=V, grid=g, t_end=2 * FS, n_init=3000,
                            constants=PhysicalConstants(mass=0.067 * ELECTRON_MASS),
                            ic=InitialCondition(12 * NM, 16 * NM, 2e-26, 0.0, 4 * NM))
        state = init_state(cfg)
        step(state, cfg)
        step(state, cfg)
        runs.append(state.ensemble.particles())
    assert runs[0] == runs[1]


@pytest.mark.parametrize("workers", [1, 4])
def test_conservation_and_worker_determinism(workers):
    g = small_grid()
    V = make_step_barrier(g, 0.02 * EV, (20 * NM, 0.0))
    cfg = packet_config(potential=V, grid=g, t_end=10 * FS, n_init=3000, workers=workers,
                        constants=PhysicalConstants(mass=0.067 * ELECTRON_MASS),
                        ic=InitialCondition(12 * NM, 16 * NM, 2e-26, 0.0, 4 * NM),
                        snapshot_times=tuple(t * FS for t in range(11)),
                        barrier=BarrierGeometry((20 * NM, 0.0), 0.0))
    snaps, report = run(cfg)
    snaps2, _ = run(cfg)
    assert report["created_pairs"] > 0 and report["annihilated"] > 0
    for s, meta in zip(snaps, report["snapshots"]):
        assert meta["in_domain_net_weight"] + meta["absorbed_weight"] == cfg.n_init
        r, t = meta["reflected_weight"], meta["transmitted_weight"]
        assert math.fsum([r, t]) == pytest.approx(s.values.sum(), abs=1e-12)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(snaps, snaps2))


def test_reflection_metric_examples():
    g = small_grid(8, 8)
    values = np.zeros((8, 8))
    values[1, 3] = 0.5
    values[2, 2] = 0.25
    snap = DensityGrid(values, 0.0)
    r, t = reflection_metrics(snap, g, BarrierGeometry((g.lx / 2, 0.0)))
    assert (r, t) == (0.75, 0.0)
    values[6, 1] = -0.125
    r, t = reflection_metrics(DensityGrid(values, 0.0), g, BarrierGeometry((g.lx / 2, 0.0)))
    assert r + t == values.sum()


def test_max_particles_abort():
    g = small_grid()
    V = make_step_barrier(g, 0.05 * EV, (16 * NM, 0.0))
    cfg = packet_config(potential=V, grid=g, n_init=2000, max_particles=2500,
                        constants=PhysicalConstants(mass=0.067 * ELECTRON_MASS),
                        ic=InitialCondition(14 * NM, 16 * NM, 2e-26, 0.0, 4 * NM))
    with pytest.raises(SimulationAbort):
        run(cfg)


def test_gamma_dt_guard_abort():
    g = small_grid()
    V = make_step_barrier(g, 0.3 * EV, (16 * NM, 0.0))
    cfg = packet_config(potential=V, grid=g, n_init=500, dt=50 * FS, t_end=50 * FS, gamma_dt_guard=1.0,
                        ic=InitialCondition(14 * NM, 16 * NM, 0.0, 0.0, 4 * NM))
    with pytest.raises(SimulationAbort, match="gamma"):
        run(cfg)


def test_one_dimensional_tunnelling_matches_schrodinger():
    """1D packet on a thin barrier: transmitted and reflected weight vs a split-operator solution."""
    m = 0.067 * ELECTRON_MASS
    c = PhysicalConstants(mass=m)
    nx, dx, lc = 200, 1 * NM, 60 * NM
    g = build_grid(nx, 1, dx, dx, lc, c, np_x=30, np_y=0)
    H = 0.1 * EV
    V = np.zeros((nx, 1))
    V[100:104, 0] = H
    E, x0, sigma, T = 0.025 * EV, 60 * NM, 10 * NM, 120 * FS
    p0 = math.sqrt(2 * m * E)
    cfg = SimConfig(g, PotentialField(V), c, InitialCondition(x0, 0.5 * NM, p0, 0.0, sigma),
                    0.2 * FS, T, (T,), n_init=100_000, seed=3, max_particles=20_000_000)
    snaps, _ = run(cfg)
    d = snaps[0].values[:, 0]
    mc_t, mc_r = d[104:].sum(), d[:100].sum()

    n = 4096
    L = nx * dx
    h = L / n
    x = (np.arange(n) + 0.5) * h
    psi = np.exp(-(x - x0) ** 2 / (2 * sigma**2) + 1j * p0 * x / HBAR)
    psi /= np.sqrt((abs(psi) ** 2).sum() * h)
    Vx = np.where((x >= 100 * NM) & (x < 104 * NM), H, 0.0)
    k = 2 * np.pi * np.fft.fftfreq(n, h)
    dt = 0.01 * FS
    ek = np.exp(-1j * HBAR * k**2 / (2 * m) * dt)
    ev = np.exp(-1j * Vx * dt / (2 * HBAR))
    for _ in range(int(round(T / dt))):
        psi = ev * np.fft.ifft(ek * np.fft.fft(ev * psi))
    rho = abs(psi) ** 2 * h
    qm_t, qm_r = rho[x >= 104 * NM].sum(), rho[x < 100 * NM].sum()
    assert abs(mc_t - qm_t) < 0.03
    assert abs(mc_r - qm_r) < 0.03
