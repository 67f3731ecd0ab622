"""Signed-particle ensemble: field-less drift, pair creation, annihilation, absorption.

The ensemble is stored as parallel arrays (structure of arrays). Array order
is the insertion order; every operation here preserves it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._accel import njit
from .errors import SimulationAbort
from .kernel_net import CellKernelTable, _select, sample_momentum
from .phase_space import GridSpec, PhysicalConstants, locate_cells


@dataclass(frozen=True)
class SignedParticle:
    x: float
    y: float
    M: int
    N: int
    sign: int

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign!r}")


@dataclass
class Ensemble:
    x: np.ndarray
    y: np.ndarray
    M: np.ndarray
    N: np.ndarray
    sign: np.ndarray
    created_pairs: int = 0
    discarded_pairs: int = 0
    annihilated: int = 0
    absorbed: int = 0
    absorbed_weight: int = 0
    absorbed_behind: int = 0  # part of absorbed that left on the far side of a barrier
    absorbed_weight_behind: int = 0

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        self.M = np.ascontiguousarray(self.M, dtype=np.int64)
        self.N = np.ascontiguousarray(self.N, dtype=np.int64)
        self.sign = np.ascontiguousarray(self.sign, dtype=np.int8)

    @classmethod
    def empty(cls) -> "Ensemble":
        z = np.empty(0)
        return cls(z, z, z.astype(np.int64), z.astype(np.int64), z.astype(np.int8))

    @classmethod
    def from_particles(cls, particles) -> "Ensemble":
        ps = list(particles)
        if not ps:
            return cls.empty()
        return cls(
            np.array([p.x for p in ps]), np.array([p.y for p in ps]),
            np.array([p.M for p in ps]), np.array([p.N for p in ps]),
            np.array([p.sign for p in ps]),
        )

    def __len__(self) -> int:
        return int(self.x.size)

    def particles(self) -> list[SignedParticle]:
        return [SignedParticle(float(a), float(b), int(c), int(d), int(e))
                for a, b, c, d, e in zip(self.x, self.y, self.M, self.N, self.sign)]

    @property
    def net_weight(self) -> int:
        return int(self.sign.sum(dtype=np.int64))

    def _select_rows(self, idx) -> None:
        self.x, self.y = self.x[idx], self.y[idx]
        self.M, self.N, self.sign = self.M[idx], self.N[idx], self.sign[idx]

    def append(self, x, y, M, N, sign) -> None:
        self.x = np.concatenate([self.x, x])
        self.y = np.concatenate([self.y, y])
        self.M = np.concatenate([self.M, M.astype(np.int64)])
        self.N = np.concatenate([self.N, N.astype(np.int64)])
        self.sign = np.concatenate([self.sign, sign.astype(np.int8)])

    def counters(self) -> dict:
        return {
            "created_pairs": self.created_pairs,
            "discarded_pairs": self.discarded_pairs,
            "annihilated": self.annihilated,
            "absorbed": self.absorbed,
            "absorbed_weight": self.absorbed_weight,
            "absorbed_behind": self.absorbed_behind,
            "absorbed_weight_behind": self.absorbed_weight_behind,
        }


# --- drift ---------------------------------------------------------------------

def drift(p: SignedParticle, dt: float, grid: GridSpec, constants: PhysicalConstants) -> SignedParticle:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    vx = p.M * grid.dp / constants.mass
    vy = p.N * grid.dp / constants.mass
    return replace(p, x=p.x + vx * dt, y=p.y + vy * dt)


def drift_ensemble(ens: Ensemble, dt: float, grid: GridSpec, constants: PhysicalConstants) -> None:
    """In-place ballistic move; same arithmetic as :func:`drift`."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    ens.x = ens.x + (ens.M * grid.dp / constants.mass) * dt
    ens.y = ens.y + (ens.N * grid.dp / constants.mass) * dt


# --- pair creation -------------------------------------------------------------

def creation_events(p: SignedParticle, table: CellKernelTable, dt: float, rng: np.random.Generator,
                    grid: GridSpec, guard: float = 10.0):
    """Poisson number of pairs for one particle over ``dt``.

    Returns ``(pairs, discarded)``; a pair whose children leave the momentum
    grid is dropped whole.
    """
    lam = table.gamma * dt
    if lam > guard:
        raise SimulationAbort(f"gamma*dt = {lam:.3g} exceeds guard {guard}; reduce the time step")
    if table.gamma <= 0.0:
        return [], 0
    pairs, discarded = [], 0
    for _ in range(int(rng.poisson(lam))):
        Mp, Np = sample_momentum(table, float(rng.random()))
        Ma, Na, Mb, Nb = p.M + Mp, p.N + Np, p.M - Mp, p.N - Np
        if max(abs(Ma), abs(Mb)) > grid.np_x or max(abs(Na), abs(Nb)) > grid.np_y:
            discarded += 1
            continue
        pairs.append((SignedParticle(p.x, p.y, Ma, Na, p.sign),
                      SignedParticle(p.x, p.y, Mb, Nb, -p.sign)))
    return pairs, discarded


@njit
def _spawn_numba(x, y, M, N, sign, counts, slots, slab, u, np_x, np_y):
    n_my = 2 * np_y + 1
    total = 0
    for k in range(counts.size):
        total += counts[k]
    cx = np.empty(2 * total)
    cy = np.empty(2 * total)
    cM = np.empty(2 * total, np.int64)
    cN = np.empty(2 * total, np.int64)
    cs = np.empty(2 * total, np.int8)
    out = 0
    e = 0
    discarded = 0
    width = slab.shape[1]
    for p in range(counts.size):
        for _ in range(counts[p]):
            row = slab[slots[p]]
            # first index with cdf > u (half-open intervals)
            lo = 0
            hi = width
            while lo < hi:
                mid = (lo + hi) // 2
                if row[mid] <= u[e]:
                    lo = mid + 1
                else:
                    hi = mid
            if lo > width - 1:
                lo = width - 1
            e += 1
            mp = lo // n_my - np_x
            nq = lo % n_my - np_y
            ma = M[p] + mp
            mb = M[p] - mp
            na = N[p] + nq
            nb = N[p] - nq
            if abs(ma) > np_x or abs(mb) > np_x or abs(na) > np_y or abs(nb) > np_y:
                discarded += 1
                continue
            cx[out] = x[p]
            cy[out] = y[p]
            cM[out] = ma
            cN[out] = na
            cs[out] = sign[p]
            cx[out + 1] = x[p]
            cy[out + 1] = y[p]
            cM[out + 1] = mb
            cN[out + 1] = nb
            cs[out + 1] = -sign[p]
            out += 2
    return cx[:out], cy[:out], cM[:out], cN[:out], cs[:out], discarded


def _spawn_numpy(x, y, M, N, sign, counts, slots, slab, u, np_x, np_y):
    n_my = 2 * np_y + 1
    parent = np.repeat(np.arange(counts.size), counts)
    flat = np.empty(parent.size, dtype=np.int64)
    ev_slot = slots[parent]
    order = np.argsort(ev_slot, kind="stable")
    bounds = np.flatnonzero(np.diff(ev_slot[order])) + 1
    for group in np.split(order, bounds):
        if group.size:
            flat[group] = np.searchsorted(slab[ev_slot[group[0]]], u[group], side="right")
    np.minimum(flat, slab.shape[1] - 1, out=flat)
    mp = flat // n_my - np_x
    nq = flat % n_my - np_y
    ma, mb = M[parent] + mp, M[parent] - mp
    na, nb = N[parent] + nq, N[parent] - nq
    ok = (np.abs(ma) <= np_x) & (np.abs(mb) <= np_x) & (np.abs(na) <= np_y) & (np.abs(nb) <= np_y)
    parent, ma, mb, na, nb = parent[ok], ma[ok], mb[ok], na[ok], nb[ok]
    s = sign[parent]
    cx = np.repeat(x[parent], 2)
    cy = np.repeat(y[parent], 2)
    cM = np.column_stack([ma, mb]).ravel()
    cN = np.column_stack([na, nb]).ravel()
    cs = np.column_stack([s, -s]).ravel().astype(np.int8)
    return cx, cy, cM, cN, cs, int((~ok).sum())


def create_pairs(ens: Ensemble, rates: np.ndarray, slots: np.ndarray, slab: np.ndarray, dt: float,
                 rngs, grid: GridSpec, guard: float = 10.0, backend: str | None = None) -> int:
    """Pair creation for the whole ensemble; children are appended in parent order.

    ``rates`` and ``slots`` are per particle (creation rate, CDF row in
    ``slab``). With several generators in ``rngs`` the ensemble is split
    into that many contiguous chunks, one stream each.
    """
    n = len(ens)
    if n == 0:
        return 0
    lam = rates * dt
    worst = float(lam.max())
    if worst > guard:
        raise SimulationAbort(f"gamma*dt = {worst:.3g} exceeds guard {guard}; reduce the time step")
    if worst <= 0.0:
        return 0
    if not isinstance(rngs, (list, tuple)):
        rngs = [rngs]
    edges = np.linspace(0, n, len(rngs) + 1).astype(np.int64)
    counts = np.empty(n, dtype=np.int64)
    uniforms = []
    for r, a, b in zip(rngs, edges[:-1], edges[1:]):
        counts[a:b] = r.poisson(lam[a:b])
        uniforms.append(r.random(int(counts[a:b].sum())))
    u = np.concatenate(uniforms) if uniforms else np.empty(0)
    if u.size == 0:
        return 0
    fn = _select(backend, _spawn_numba, _spawn_numpy)
    cx, cy, cM, cN, cs, discarded = fn(ens.x, ens.y, ens.M, ens.N, ens.sign, counts,
                                       np.ascontiguousarray(slots, dtype=np.int64), slab, u,
                                       grid.np_x, grid.np_y)
    ens.append(cx, cy, cM, cN, cs)
    ens.created_pairs += int(cx.size // 2)
    ens.discarded_pairs += int(discarded)
    return int(cx.size // 2)


# --- annihilation ----------------------------------------------------------------

def phase_space_keys(ens: Ensemble, grid: GridSpec) -> np.ndarray:
    i, j, _ = locate_cells(grid, ens.x, ens.y)
    i = np.clip(i, 0, grid.nx - 1)
    j = np.clip(j, 0, grid.ny - 1)
    return ((i * grid.ny + j) * grid.n_mx + (ens.M + grid.np_x)) * grid.n_my + (ens.N + grid.np_y)


@njit
def _annihilate_numba(keys, sign, order):
    keep = np.zeros(keys.size, np.bool_)
    start = 0
    n = keys.size
    while start < n:
        stop = start + 1
        k0 = keys[order[start]]
        net = int(sign[order[start]])
        while stop < n and keys[order[stop]] == k0:
            net += sign[order[stop]]
            stop += 1
        if net != 0:
            want = 1 if net > 0 else -1
            left = abs(net)
            for t in range(start, stop):
                if left == 0:
                    break
                idx = order[t]
                if sign[idx] == want:
                    keep[idx] = True
                    left -= 1
        start = stop
    return keep


def _annihilate_numpy(keys, sign, order):
    ks = keys[order]
    ss = sign[order].astype(np.int64)
    starts = np.concatenate([[0], np.flatnonzero(np.diff(ks)) + 1])
    sizes = np.diff(np.concatenate([starts, [ks.size]]))
    net = np.add.reduceat(ss, starts)
    group_net = np.repeat(net, sizes)
    want = np.sign(group_net)
    match = (ss == want) & (want != 0)
    # rank of each matching particle among its group's matching particles
    csum = np.cumsum(match)
    base = np.repeat(csum[starts] - match[starts], sizes)
    rank = csum - base - 1
    keep_sorted = match & (rank < np.abs(group_net))
    keep = np.zeros(keys.size, dtype=bool)
    keep[order] = keep_sorted
    return keep


def _stable_order(keys: np.ndarray) -> np.ndarray:
    """Stable argsort; sorts ``key * n + index`` (unique values) when it fits in int64."""
    n = keys.size
    if n and int(keys.max()) < (2**62) // max(n, 1):
        return np.sort(keys * n + np.arange(n)) % n
    return np.argsort(keys, kind="stable")


def annihilate(ens: Ensemble, grid: GridSpec, backend: str | None = None) -> Ensemble:
    """Cancel opposite signs sharing a phase-space cell ``(i, j, M, N)``.

    Each cell keeps its first ``|net|`` particles of the majority sign, in
    insertion order and at their own positions.
    """
    if len(ens) == 0:
        return ens
    keys = phase_space_keys(ens, grid)
    fn = _select(backend, _annihilate_numba, _annihilate_numpy)
    order = _stable_order(keys)
    keep = fn(keys, ens.sign, order)
    removed = len(ens) - int(keep.sum())
    if removed:
        ens._select_rows(keep)
        ens.annihilated += removed
    return ens


def absorb_boundary(ens: Ensemble, grid: GridSpec, side=None) -> Ensemble:
    """Remove particles outside the domain and book their signed weight.

    ``side(x, y)`` (optional) returns >= 0 behind a barrier; weight leaving
    there is also booked in ``absorbed_behind`` / ``absorbed_weight_behind``.
    """
    _, _, inside = locate_cells(grid, ens.x, ens.y)
    if inside.all():
        return ens
    out = ~inside
    ens.absorbed += int(out.sum())
    ens.absorbed_weight += int(ens.sign[out].sum(dtype=np.int64))
    if side is not None:
        behind = side(ens.x[out], ens.y[out]) >= 0.0
        ens.absorbed_behind += int(behind.sum())
        ens.absorbed_weight_behind += int(ens.sign[out][behind].sum(dtype=np.int64))
    ens._select_rows(inside)
    return ens
