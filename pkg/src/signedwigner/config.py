"""Flat ``section.key = value`` configuration files.

Units live in key suffixes (``_nm``, ``_fs``, ``_ev``, ``_me``) and are
converted to SI when the :class:`~signedwigner.engine.SimConfig` is built.
Unknown keys, duplicates and invalid values are rejected with the key name
and line number. :func:`echo_config` writes every effective value back out in
a form that parses to the same run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .engine import BarrierGeometry, InitialCondition, SimConfig
from .errors import ConfigError
from .phase_space import (
    ELECTRON_MASS,
    EV,
    FS,
    NM,
    PhysicalConstants,
    PotentialField,
    build_grid,
    make_step_barrier,
)


def _int(text: str) -> int:
    value = float(text)
    if not math.isfinite(value) or value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"expected a finite number, got {text!r}")
    return value


def _float_list(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(_float(part) for part in text.split(","))


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any = None  # None: derived from other settings
    check: Callable[[Any], bool] | None = None
    rule: str = ""


_positive = (lambda v: v > 0, "must be positive")
_non_negative = (lambda v: v >= 0, "must be non-negative")
_at_least_one = (lambda v: v >= 1, "must be at least 1")


def _key(parse, default=None, rule=None):
    check, text = rule if rule else (None, "")
    return Key(parse, default, check, text)


KEYS: dict[str, Key] = {
    "domain.nx": _key(_int, 100, _at_least_one),
    "domain.ny": _key(_int, 100, _at_least_one),
    "domain.dx_nm": _key(_float, 1.0, _positive),
    "domain.dy_nm": _key(_float, 1.0, _positive),
    "grid.lc_nm": _key(_float, None, _positive),
    "grid.np_x": _key(_int, None, _non_negative),
    "grid.np_y": _key(_int, None, _non_negative),
    "time.dt_fs": _key(_float, 0.1, _positive),
    "time.t_end_fs": _key(_float, 150.0, _non_negative),
    "time.snapshots_fs": _key(_float_list, None),
    "time.annihilation_period": _key(_int, 1, _at_least_one),
    "packet.x0_nm": _key(_float, None),
    "packet.y0_nm": _key(_float, None),
    "packet.sigma_nm": _key(_float, 10.0, _positive),
    "packet.energy_ev": _key(_float, 0.025, _non_negative),
    "packet.angle_deg": _key(_float, 0.0),
    "potential.type": _key(str, "none", (lambda v: v in ("none", "step"), "must be 'none' or 'step'")),
    "potential.height_ev": _key(_float, 0.0),
    "potential.x0_nm": _key(_float, None),
    "potential.y0_nm": _key(_float, None),
    "potential.angle_deg": _key(_float, 0.0),
    "particles.n_init": _key(_int, 100_000, _at_least_one),
    "particles.max": _key(_int, 10_000_000, _at_least_one),
    "particles.mass_me": _key(_float, 1.0, _positive),
    "kernel.cache_retention": _key(_int, -1, (lambda v: v >= -1, "must be -1 (unlimited) or >= 0")),
    "kernel.gamma_dt_guard": _key(_float, 10.0, _positive),
    "kernel.mem_cap_bytes": _key(_int, 4 * 1024**3, _positive),
    "run.seed": _key(_int, 0, (lambda v: 0 <= v < 2**64, "must be an unsigned 64-bit integer")),
    "run.workers": _key(_int, 1, _at_least_one),
}


def _resolve(settings: dict) -> dict:
    s = dict(settings)
    nx, ny = s["domain.nx"], s["domain.ny"]
    lx, ly = nx * s["domain.dx_nm"], ny * s["domain.dy_nm"]
    if s["grid.lc_nm"] is None:
        s["grid.lc_nm"] = lx if ny == 1 else min(lx, ly)
    if s["grid.np_x"] is None:
        s["grid.np_x"] = nx // 2
    if s["grid.np_y"] is None:
        s["grid.np_y"] = 0 if ny == 1 else ny // 2
    if s["time.snapshots_fs"] is None:
        s["time.snapshots_fs"] = (s["time.t_end_fs"],)
    for k, extent in (("x0_nm", lx), ("y0_nm", ly)):
        for section in ("packet", "potential"):
            if s[f"{section}.{k}"] is None:
                s[f"{section}.{k}"] = extent / 2
    return s


def parse_settings(text: str, source: str = "<config>") -> dict:
    """Typed, defaulted and resolved settings from config text."""
    raw: dict = {}
    lines: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {body!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        spec = KEYS.get(key)
        if spec is None:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first on line {lines[key]})")
        try:
            parsed = spec.parse(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {key}: {exc}") from None
        if spec.check is not None and not spec.check(parsed):
            raise ConfigError(f"{source}:{lineno}: {key} {spec.rule} (got {value!r})")
        raw[key] = parsed
        lines[key] = lineno
    settings = {k: raw.get(k, spec.default) for k, spec in KEYS.items()}
    settings = _resolve(settings)
    settings["__lines__"] = lines
    return settings


def _where(settings: dict, key: str, source: str) -> str:
    line = settings.get("__lines__", {}).get(key)
    return f"{source}:{line}: {key}" if line else f"{source}: {key}"


def build_config(settings: dict, source: str = "<config>") -> SimConfig:
    """SI :class:`SimConfig` from resolved settings."""
    s = settings

    def fail(key, message):
        raise ConfigError(f"{_where(s, key, source)} {message}")

    for t in s["time.snapshots_fs"]:
        if t < 0 or t > s["time.t_end_fs"]:
            fail("time.snapshots_fs", f"value {t!r} outside [0, time.t_end_fs]")
    constants = PhysicalConstants(mass=s["particles.mass_me"] * ELECTRON_MASS)
    try:
        grid = build_grid(
            s["domain.nx"], s["domain.ny"], s["domain.dx_nm"] * NM, s["domain.dy_nm"] * NM,
            s["grid.lc_nm"] * NM, constants, np_x=s["grid.np_x"], np_y=s["grid.np_y"],
        )
    except ConfigError as exc:
        fail("grid.lc_nm", str(exc))

    barrier = None
    if s["potential.type"] == "step":
        point = (s["potential.x0_nm"] * NM, s["potential.y0_nm"] * NM)
        angle = math.radians(s["potential.angle_deg"])
        try:
            potential = make_step_barrier(grid, s["potential.height_ev"] * EV, point, angle)
        except ConfigError as exc:
            fail("potential.x0_nm", str(exc))
        barrier = BarrierGeometry(point, angle)
    else:
        import numpy as np
        potential = PotentialField(np.zeros((grid.nx, grid.ny)))

    p0 = math.sqrt(2.0 * constants.mass * s["packet.energy_ev"] * EV)
    theta = math.radians(s["packet.angle_deg"])
    ic = InitialCondition(
        x0=s["packet.x0_nm"] * NM,
        y0=s["packet.y0_nm"] * NM,
        p0x=p0 * math.cos(theta),
        p0y=p0 * math.sin(theta) if grid.dim == 2 else 0.0,
        sigma=s["packet.sigma_nm"] * NM,
    )
    retention = s["kernel.cache_retention"]
    public = {k: v for k, v in s.items() if not k.startswith("__")}
    return SimConfig(
        grid=grid,
        potential=potential,
        constants=constants,
        ic=ic,
        dt=s["time.dt_fs"] * FS,
        t_end=s["time.t_end_fs"] * FS,
        snapshot_times=tuple(t * FS for t in s["time.snapshots_fs"]),
        n_init=s["particles.n_init"],
        annihilation_period=s["time.annihilation_period"],
        seed=s["run.seed"],
        max_particles=s["particles.max"],
        gamma_dt_guard=s["kernel.gamma_dt_guard"],
        cache_retention=None if retention < 0 else retention,
        workers=s["run.workers"],
        barrier=barrier,
        settings=public,
    )


def parse_config_text(text: str, source: str = "<config>") -> SimConfig:
    return build_config(parse_settings(text, source), source)


def parse_config(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    return parse_config_text(text, str(path))


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def echo_config(config: SimConfig) -> str:
    """Every effective setting as ``key = value`` lines (floats in shortest round-trip form)."""
    return "".join(f"{k} = {_format(v)}\n" for k, v in config.settings.items())


def with_overrides(config: SimConfig, **overrides) -> SimConfig:
    """Rebuild a config with some settings replaced (keys use ``section.key`` names)."""
    settings = dict(config.settings)
    for key, value in overrides.items():
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
        settings[key] = value
    return build_config(settings)
