#!/usr/bin/env python3
"""Numba vs numpy backends on the hot paths.

Times point kernel evaluation, pair creation and annihilation on the same
inputs with both backends, checks that they agree, and prints a table.
Run from the repository root:

    python benchmarks/bench_backends.py [--config configs/barrier_perpendicular.cfg]
"""

from __future__ import annotations

import argparse
import copy
import time

import numpy as np

from signedwigner import _accel
from signedwigner.config import parse_config, with_overrides
from signedwigner.engine import init_state, run, step
from signedwigner.kernel_net import kernel_value
from signedwigner.kernel_oracle import kernel_scale
from signedwigner.particles import annihilate, create_pairs
from signedwigner.phase_space import locate_cells


def best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_points(config, n_points: int, repeat: int) -> dict:
    grid, potential = config.grid, config.potential
    rng = np.random.default_rng(0)
    pts = np.column_stack([
        rng.integers(0, grid.nx, n_points), rng.integers(0, grid.ny, n_points),
        rng.integers(-grid.np_x, grid.np_x + 1, n_points), rng.integers(-grid.np_y, grid.np_y + 1, n_points),
    ]).tolist()
    out = {}
    values = {}
    for backend in ("numba", "numpy"):
        kernel_value(pts[0], potential, grid, backend=backend)  # compile / warm caches

        def go(b=backend):
            values[b] = [kernel_value(p, potential, grid, backend=b) for p in pts]

        out[backend] = best_of(go, repeat)
    scales = [kernel_scale(p, potential, grid) for p in pts]
    worst = max((abs(a - b) / s for a, b, s in zip(values["numba"], values["numpy"], scales) if s > 0), default=0.0)
    return {"times": out, "agreement": worst, "label": f"kernel_value x{n_points}"}


def warm_state(config, steps: int):
    state = init_state(config)
    for _ in range(steps):
        step(state, config)
    return state


def bench_creation(config, state, repeat: int) -> dict:
    grid = config.grid
    ens0 = state.ensemble
    i, j, _ = locate_cells(grid, ens0.x, ens0.y)
    rates, slots = state.cache.lookup(i * grid.ny + j, config.potential)
    out, results = {}, {}
    for backend in ("numba", "numpy"):
        def go(b=backend):
            ens = copy.deepcopy(ens0)
            rngs = [np.random.Generator(np.random.PCG64(5))]
            create_pairs(ens, rates, slots, state.cache.slab, config.dt, rngs, grid,
                         guard=config.gamma_dt_guard, backend=b)
            results[b] = ens

        go()
        out[backend] = best_of(go, repeat)
    a, b = results["numba"], results["numpy"]
    same = all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("x", "y", "M", "N", "sign"))
    return {"times": out, "agreement": 0.0 if same else float("nan"), "label": f"create_pairs ({len(ens0)} parents)"}


def bench_annihilation(config, state, repeat: int) -> dict:
    grid = config.grid
    ens0 = state.ensemble
    out, results = {}, {}
    for backend in ("numba", "numpy"):
        def go(b=backend):
            ens = copy.deepcopy(ens0)
            annihilate(ens, grid, backend=b)
            results[b] = ens

        go()
        out[backend] = best_of(go, repeat)
    a, b = results["numba"], results["numpy"]
    same = all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("x", "y", "M", "N", "sign"))
    return {"times": out, "agreement": 0.0 if same else float("nan"), "label": f"annihilate ({len(ens0)} particles)"}


def bench_run(config, repeat: int) -> dict:
    out, results = {}, {}
    for backend in ("numba", "numpy"):
        def go(b=backend):
            snaps, _ = run(config, backend=b)
            results[b] = snaps[-1].values

        go()
        out[backend] = best_of(go, repeat)
    same = np.array_equal(results["numba"], results["numpy"])
    return {"times": out, "agreement": 0.0 if same else float("nan"),
            "label": f"full run ({config.settings['time.t_end_fs']:g} fs)"}


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default="configs/barrier_perpendicular.cfg")
    parser.add_argument("--points", type=int, default=20_000)
    parser.add_argument("--warm-steps", type=int, default=20)
    parser.add_argument("--run-fs", type=float, default=20.0)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    config = parse_config(args.config)
    short = with_overrides(config, **{"time.t_end_fs": args.run_fs, "time.snapshots_fs": (args.run_fs,)})
    state = warm_state(short, args.warm_steps)

    rows = [
        bench_points(config, args.points, args.repeat),
        bench_creation(short, state, args.repeat),
        bench_annihilation(short, state, args.repeat),
        bench_run(short, 1),
    ]
    print(f"{'operation':<34} {'numba (s)':>10} {'numpy (s)':>10} {'speedup':>8}  agreement")
    for r in rows:
        nb, npy = r["times"]["numba"], r["times"]["numpy"]
        agree = "identical" if r["agreement"] == 0.0 else f"{r['agreement']:.1e}"
        print(f"{r['label']:<34} {nb:>10.4f} {npy:>10.4f} {npy / nb:>7.1f}x  {agree}")


if __name__ == "__main__":
    main()
