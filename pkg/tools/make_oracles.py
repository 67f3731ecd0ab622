#!/usr/bin/env python3
"""Independent reference values for the test suite, frozen to tests/oracle_values.json.

Everything here is computed with mpmath at 40 digits or by plain enumeration,
without importing the package, so the tests compare two separate paths.
"""

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 40

HBAR = mp.mpf("1.054571817e-34")
ME = mp.mpf("9.1093837015e-31")
EV = mp.mpf("1.602176634e-19")
NM = mp.mpf("1e-9")
FS = mp.mpf("1e-15")


def dp(lc):
    return mp.pi * HBAR / lc


def barrier_cells_45(nx, ny, d, point, angle_deg, height):
    """Count cells whose center lies on the barrier side of an oblique line."""
    a = mp.radians(angle_deg)
    c, s = mp.cos(a), mp.sin(a)
    count = 0
    for i in range(nx):
        for j in range(ny):
            x, y = (i + mp.mpf(1) / 2) * d, (j + mp.mpf(1) / 2) * d
            if (x - point[0]) * c + (y - point[1]) * s >= 0:
                count += 1
    return count


def main():
    sigma, t = 10 * NM, 150 * FS
    spread = (HBAR * t / (ME * sigma)) ** 2 / 2
    p0 = mp.sqrt(2 * ME * mp.mpf("0.025") * EV)
    values = {
        "dp_lc100nm": dp(100 * NM),
        "window_dx1_lc100": int(mp.floor(100 / mp.mpf(2) + mp.mpf(1) / 2)),
        "drift_dx_M1_dt1fs": dp(100 * NM) / ME * FS,
        "p0_me_0025ev": p0,
        "free_var_sigma10_t150_me": sigma**2 / 2 + spread,
        "free_var_static_part": sigma**2 / 2,
        "free_var_spread_part": spread,
        "free_mean_shift_t150_me": p0 / ME * t,
        # 40x40 grid of 1 nm cells, interface through (20.3, 17.9) nm at 45 degrees
        "barrier45_cells_40x40": barrier_cells_45(40, 40, NM, (mp.mpf("20.3") * NM, mp.mpf("17.9") * NM), 45, 1),
        "dense_bytes_100x100_101x101": 100 * 100 * 101 * 101 * 8,
        "dense_bytes_16x16_17x17": 16 * 16 * 17 * 17 * 8,
    }
    out = {k: (int(v) if isinstance(v, int) else float(v)) for k, v in values.items()}
    path = Path(__file__).resolve().parent.parent / "tests" / "oracle_values.json"
    path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    for k, v in out.items():
        print(f"{k:32s} {v!r}")


if __name__ == "__main__":
    main()
