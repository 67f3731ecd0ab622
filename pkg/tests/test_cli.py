import json
import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import CONFIGS, ROOT
from signedwigner.cli import bench_kernel, main
from signedwigner.config import parse_config


def write(tmp_path, text, name="case.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_t_end_zero_run(tmp_path):
    cfg = write(tmp_path, "domain.nx = 20\ndomain.ny = 20\ntime.t_end_fs = 0\npacket.sigma_nm = 3\nparticles.n_init = 500\n")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["config.resolved", "density_t0.csv", "density_t0.dat", "manifest.json"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert sorted(manifest["files"]) == files
    rows = (out / "density_t0.csv").read_text().splitlines()
    assert rows[0] == "i,j,x_nm,y_nm,density" and len(rows) == 401
    total = sum(float(r.split(",")[-1]) for r in rows[1:])
    assert total == pytest.approx(1.0, abs=1e-12)
    dat = np.loadtxt(out / "density_t0.dat")
    assert dat.shape == (20, 20)


def test_toy_run_manifest_and_echo(tmp_path):
    out = tmp_path / "a"
    assert main(["run", "--config", str(CONFIGS / "toy16.cfg"), "--out", str(out), "--seed", "4"]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["seed"] == 4 and m["config"]["run.seed"] == 4
    for key in ("wall_time_s", "counters", "peak_kernel_bytes", "code_version", "snapshots"):
        assert key in m
    assert [s["time_fs"] for s in m["snapshots"]] == [5.0, 10.0]
    for s in m["snapshots"]:
        assert "reflected_weight" in s and "transmitted_weight" in s
    # the echo reproduces the run
    out2 = tmp_path / "b"
    assert main(["run", "--config", str(out / "config.resolved"), "--out", str(out2)]) == 0
    for name in ("density_t5.csv", "density_t10.csv"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes()


def test_same_seed_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert main(["run", "--config", str(CONFIGS / "toy16.cfg"), "--out", str(out)]) == 0
        outs.append(out)
    for name in ("density_t5.csv", "density_t10.csv", "density_t10.dat"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, "time.dt_fs = -1\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "time.dt_fs" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "x")]) == 2
    abort = write(tmp_path, (CONFIGS / "toy16.cfg").read_text().replace("particles.n_init = 2000",
                                                                       "particles.n_init = 2000\nparticles.max = 2001"))
    assert main(["run", "--config", str(abort), "--out", str(tmp_path / "y")]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--config", str(CONFIGS / "toy16.cfg"), "--out", str(blocker / "sub")]) == 4


def test_bench_kernel_toy():
    report = bench_kernel(parse_config(CONFIGS / "toy16.cfg"), n_points=10_000)
    assert report["dense_status"] == "built"
    assert report["dense_bytes"] == 16 * 16 * 17 * 17 * 8
    assert report["ondemand_cells"] > 0
    assert report["max_rel_error_point"] <= 1e-12
    assert report["max_rel_error_table"] <= 1e-12


def test_bench_kernel_refuses_dense(capsys):
    cfg = parse_config(CONFIGS / "memory_101.cfg")
    assert main(["bench-kernel", "--config", str(CONFIGS / "memory_101.cfg"), "--mem-cap-bytes", "100000000"]) == 0
    out = capsys.readouterr().out
    assert "refused" in out
    assert f"{cfg.grid.dense_kernel_bytes():,}" in out


def test_console_entry_point(tmp_path):
    env = dict(os.environ)
    res = subprocess.run([sys.executable, "-m", "signedwigner", "run", "--config", str(CONFIGS / "toy16.cfg"),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True, env=env, cwd=ROOT)
    assert res.returncode == 0, res.stderr
    assert "wrote" in res.stdout
