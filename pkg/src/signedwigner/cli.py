"""Command line: run a simulation, or benchmark on-demand vs dense kernel evaluation.

Exit codes: 0 success, 2 configuration error, 3 runtime abort, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _accel
from .config import echo_config, parse_config, with_overrides
from .engine import run
from .errors import ConfigError, MemoryCapExceeded, SimulationAbort
from .kernel_net import cell_kernel, kernel_value
from .kernel_oracle import dense_bytes, kernel_bruteforce, kernel_scale, precompute_dense
from .phase_space import FS, NM

log = logging.getLogger("signedwigner")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_IO = 0, 2, 3, 4


def _time_label(t_fs: float) -> str:
    return f"{t_fs:g}"


def write_density_csv(path: Path, snapshot, grid) -> None:
    lines = ["i,j,x_nm,y_nm,density"]
    values = snapshot.values
    for i in range(grid.nx):
        x_nm = repr((i + 0.5) * grid.dx / NM)
        for j in range(grid.ny):
            y_nm = repr((j + 0.5) * grid.dy / NM)
            lines.append(f"{i},{j},{x_nm},{y_nm},{float(values[i, j])!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_density_dat(path: Path, snapshot, grid) -> None:
    """gnuplot ``matrix`` layout: one line per y row, x varies along the line."""
    rows = [f"# density at t = {snapshot.time / FS:g} fs; {grid.ny} rows (y) x {grid.nx} columns (x)"]
    for j in range(grid.ny):
        rows.append(" ".join(repr(float(v)) for v in snapshot.values[:, j]))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def cmd_run(config_path, out_dir, seed=None, workers=None) -> int:
    try:
        config = parse_config(config_path)
        overrides = {}
        if seed is not None:
            overrides["run.seed"] = int(seed)
        if workers is not None:
            overrides["run.workers"] = int(workers)
        if overrides:
            config = with_overrides(config, **overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_IO

    t0 = time.perf_counter()
    try:
        snapshots, report = run(config)
    except SimulationAbort as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    report.pop("final_state", None)

    grid = config.grid
    files = []
    snap_meta = []
    try:
        echo_name = "config.resolved"
        (out / echo_name).write_text(echo_config(config), encoding="utf-8")
        files.append(echo_name)
        for t_fs, snap, meta in zip(config.settings["time.snapshots_fs"], snapshots, report["snapshots"]):
            label = _time_label(t_fs)
            csv_name, dat_name = f"density_t{label}.csv", f"density_t{label}.dat"
            write_density_csv(out / csv_name, snap, grid)
            write_density_dat(out / dat_name, snap, grid)
            files += [csv_name, dat_name]
            snap_meta.append({"time_fs": t_fs, "step": snap.step, "csv": csv_name, "dat": dat_name,
                              "density_sum": math.fsum(snap.values.ravel().tolist()),
                              "in_domain_net_weight_normalized": meta["in_domain_net_weight"] / config.n_init,
                              **meta})
        manifest = {
            "code_version": __version__,
            "backend": _accel.backend_name(),
            "seed": config.seed,
            "workers": config.workers,
            "config": {k: v if not isinstance(v, tuple) else list(v) for k, v in config.settings.items()},
            "wall_time_s": time.perf_counter() - t0,
            "counters": {k: v for k, v in report.items() if k != "snapshots"},
            "peak_kernel_bytes": report["peak_kernel_bytes"],
            "snapshots": snap_meta,
            "files": files + ["manifest.json"],
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"failed writing outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    for meta in snap_meta:
        line = f"t = {meta['time_fs']:g} fs  particles = {meta['particles']}  net = {meta['in_domain_net_weight_normalized']:.4f}"
        if "reflected_weight" in meta:
            line += f"  reflected = {meta['reflected_weight']:.4f}  transmitted = {meta['transmitted_weight']:.4f}"
        print(line)
    print(f"wrote {len(files) + 1} files to {out}")
    return EXIT_OK


def bench_kernel(config, mem_cap_bytes=None, ref_steps: int = 5, n_points: int = 10_000, seed: int = 12345) -> dict:
    """Dense vs on-demand kernel cost and an equivalence check on random points."""
    grid, potential = config.grid, config.potential
    cap = int(mem_cap_bytes if mem_cap_bytes is not None else config.settings.get("kernel.mem_cap_bytes", 4 * 1024**3))
    report: dict = {"grid": [grid.nx, grid.ny], "momentum": [grid.n_mx, grid.n_my], "mem_cap_bytes": cap}

    need = dense_bytes(grid)
    report["dense_bytes"] = need
    try:
        dense = precompute_dense(potential, grid, cap)
        report.update(dense_status="built", dense_seconds=dense.build_seconds, dense_entries=int(dense.values.size))
        del dense
    except MemoryCapExceeded as exc:
        report.update(dense_status="refused", dense_message=str(exc))

    short = with_overrides(
        config,
        **{"time.t_end_fs": ref_steps * config.settings["time.dt_fs"], "time.snapshots_fs": (),
           "particles.n_init": min(config.n_init, 20_000)},
    )
    _, ref = run(short)
    cache = ref["final_state"].cache
    cells = sorted(cache.cells_built)
    t0 = time.perf_counter()
    for cell in cells:
        cell_kernel(cell, potential, grid)
    report.update(
        ondemand_cells=len(cells),
        ondemand_seconds=time.perf_counter() - t0,
        ondemand_bytes=len(cells) * grid.n_momentum * 8,
        ondemand_peak_kernel_bytes=ref["peak_kernel_bytes"],
    )

    rng = np.random.default_rng(seed)
    pts = np.column_stack([
        rng.integers(0, grid.nx, n_points), rng.integers(0, grid.ny, n_points),
        rng.integers(-grid.np_x, grid.np_x + 1, n_points), rng.integers(-grid.np_y, grid.np_y + 1, n_points),
    ])
    worst_point = worst_table = 0.0
    t_net = t_oracle = 0.0
    tables = {}
    for p in pts.tolist():
        a = time.perf_counter()
        net = kernel_value(p, potential, grid)
        b = time.perf_counter()
        ref_value = kernel_bruteforce(p, potential, grid)
        t_oracle += time.perf_counter() - b
        t_net += b - a
        scale = kernel_scale(p, potential, grid)
        if scale > 0:
            cell = (p[0], p[1])
            if cell not in tables:
                tables[cell] = cell_kernel(cell, potential, grid)
            tab = tables[cell][p[2] + grid.np_x, p[3] + grid.np_y]
            worst_point = max(worst_point, abs(net - ref_value) / scale)
            worst_table = max(worst_table, abs(tab - ref_value) / scale)
    report.update(equivalence_points=n_points, max_rel_error_point=worst_point,
                  max_rel_error_table=worst_table, network_seconds=t_net, bruteforce_seconds=t_oracle)
    return report


def print_bench(report: dict) -> None:
    rows = [
        ("grid (cells)", f"{report['grid'][0]} x {report['grid'][1]}"),
        ("momentum grid", f"{report['momentum'][0]} x {report['momentum'][1]}"),
        ("dense kernel bytes", f"{report['dense_bytes']:,}"),
        ("memory cap bytes", f"{report['mem_cap_bytes']:,}"),
        ("dense status", report["dense_status"]),
    ]
    if report["dense_status"] == "built":
        rows.append(("dense build time (s)", f"{report['dense_seconds']:.3f}"))
    rows += [
        ("on-demand cells", str(report["ondemand_cells"])),
        ("on-demand build time (s)", f"{report['ondemand_seconds']:.3f}"),
        ("on-demand bytes", f"{report['ondemand_bytes']:,}"),
        ("equivalence points", str(report["equivalence_points"])),
        ("max rel. error (point)", f"{report['max_rel_error_point']:.3e}"),
        ("max rel. error (cell table)", f"{report['max_rel_error_table']:.3e}"),
    ]
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v}")


def cmd_bench_kernel(config_path, mem_cap_bytes=None) -> int:
    try:
        config = parse_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = bench_kernel(config, mem_cap_bytes)
    except SimulationAbort as exc:
        print(f"reference run aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    print_bench(report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="signedwigner", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a simulation and write density snapshots")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--workers", type=int)
    p_bench = sub.add_parser("bench-kernel", help="compare dense and on-demand kernel evaluation")
    p_bench.add_argument("--config", required=True)
    p_bench.add_argument("--mem-cap-bytes", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "run":
        return cmd_run(args.config, args.out, args.seed, args.workers)
    return cmd_bench_kernel(args.config, args.mem_cap_bytes)


if __name__ == "__main__":
    sys.exit(main())
