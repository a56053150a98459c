"""Leapfrog evolution of the radial wave equation u_tt - Delta u + V u = f.

The radial Laplacian is discretized in conservative (finite-volume) form

    (Delta_h u)_i = [r_{i+1/2}^(N-1) (u_{i+1}-u_i) - r_{i-1/2}^(N-1) (u_i-u_{i-1})] / (h vol_i)

with vol_i the integral of r^(N-1) over the dual cell of node i.  At the
origin this reduces to 2N (u_1-u_0)/h^2, the even extension of N u''(0).
The scheme is second order in space and time and conserves a discrete
energy exactly (up to the leapfrog staggering).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from . import profiles as P
from .errors import CFLViolationError, DomainTooSmallError, NotConvergedError
from .grid import RadialGrid, RadialProfile, hermite_eval
from .norms import SampledField, _weighted_inner, cell_volumes, exterior_sum


# ---------------------------------------------------------------- data types

@dataclass(frozen=True)
class CauchyData:
    """Initial pair (u0, u1) on a shared grid."""
    u0: RadialProfile
    u1: RadialProfile
    support_radius: float = field(init=False)
    energy_norm: float = field(init=False)

    def __post_init__(self):
        if not np.array_equal(self.u0.r, self.u1.r):
            raise ValueError("u0 and u1 must share a grid")
        r = self.u0.r
        nz = np.nonzero((self.u0.values != 0) | (self.u1.values != 0))[0]
        if nz.size == 0:
            sup = 0.0
        elif nz[-1] >= r.size - 1:
            sup = np.inf
        else:
            sup = float(r[nz[-1] + 1])
        object.__setattr__(self, "support_radius", sup)
        h1 = _weighted_inner([self.u0], 0.0, derivative=True)[0, 0]
        l2 = _weighted_inner([self.u1], 0.0)[0, 0]
        e = float(np.sqrt(max(h1, 0.0) + max(l2, 0.0)))
        if not np.isfinite(e):
            raise ValueError("data has infinite energy norm on this grid")
        object.__setattr__(self, "energy_norm", e)

    @property
    def grid(self):
        return self.u0.grid

    @classmethod
    def from_functions(cls, grid, f0, f1=None, df0=None, df1=None):
        """Sample callables; derivatives default to centered differences."""
        from .grid import profile_from_function
        zero = lambda r: np.zeros_like(np.asarray(r, dtype=float))
        u0 = profile_from_function(grid, f0, df0)
        u1 = profile_from_function(grid, f1 or zero, df1 if f1 else zero)
        return cls(u0, u1)

    def reversed(self):
        """(u0, -u1): the data of t -> u(-t)."""
        return CauchyData(self.u0, self.u1.scale(-1.0))


@dataclass(frozen=True)
class Potential:
    """V = 0, a single rescaled soliton potential, or a sum over scales."""
    kind: str = "none"
    scales: tuple = ()

    @classmethod
    def none(cls):
        return cls("none", ())

    @classmethod
    def soliton(cls, mu=1.0):
        return cls("soliton", (float(mu),))

    @classmethod
    def multisoliton(cls, scales):
        s = tuple(float(x) for x in scales)
        if any(b >= a for a, b in zip(s, s[1:])) or min(s) <= 0:
            raise ValueError("scales must be positive and strictly decreasing")
        return cls("multisoliton", s)

    def values(self, N, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "none":
            return np.zeros_like(r)
        return sum(mu**-2.0 * P.potential(N, r / mu) for mu in self.scales)

    def describe(self):
        return {"kind": self.kind, "scales": list(self.scales)}


@dataclass(frozen=True)
class SolverConfig:
    h: float
    r_max: float
    cfl: float = 0.4
    snapshot_times: tuple = ()

    def __post_init__(self):
        if not 0 < self.cfl <= 0.9:
            raise CFLViolationError(f"Courant number {self.cfl} outside (0, 0.9]")
        if self.h <= 0 or self.r_max <= 0:
            raise ValueError("h and r_max must be positive")

    def grid(self, N):
        return RadialGrid.uniform(N, self.r_max, self.h)

    def hash(self, extra=None):
        import hashlib
        payload = {"h": self.h, "r_max": self.r_max, "cfl": self.cfl,
                   "snapshots": list(self.snapshot_times)}
        if extra:
            payload.update(extra)
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]


@dataclass(frozen=True)
class Snapshot:
    t: float
    u: np.ndarray
    ut: np.ndarray


@dataclass
class WaveTrajectory:
    grid: RadialGrid
    snapshots: list
    config: SolverConfig
    potential: Potential
    forcing: Optional[str] = None
    time_sign: int = 1
    support_radius: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        ts = [abs(s.t) for s in self.snapshots]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("snapshot times must be strictly increasing")

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    def clean_radius(self, t):
        """Largest r whose value at time t cannot have felt the outer boundary."""
        if np.isfinite(self.support_radius):
            return self.grid.r_max
        return self.grid.r_max - abs(t) - 5 * self.config.h

    def energy(self, snap: Snapshot, rmin=0.0):
        V = self.potential.values(self.grid.dimension, self.grid.nodes)
        return exterior_sum(self.grid, snap.u, snap.ut, rmin, V)[0]

    def field(self, func=None) -> SampledField:
        """SampledField of u, or of func(snapshot, r) when given."""
        r = self.grid.nodes
        rows = [s.u if func is None else func(s, r) for s in self.snapshots]
        return SampledField(self.times, r, np.array(rows), self.grid.dimension)

    def manifest(self):
        return {"version": 1, "grid": self.grid.describe(), "potential": self.potential.describe(),
                "forcing": self.forcing, "time_sign": self.time_sign,
                "config_hash": self.config.hash({"potential": self.potential.describe(),
                                                 "forcing": self.forcing}),
                "times": self.times.tolist()}

    def export(self, directory):
        """Per-snapshot CSV files plus a JSON manifest."""
        import os
        os.makedirs(directory, exist_ok=True)
        man = self.manifest()
        files = []
        for k, s in enumerate(self.snapshots):
            name = f"snapshot_{k:04d}_{man['config_hash']}.csv"
            with open(os.path.join(directory, name), "w") as fh:
                fh.write(f"# version=1\n# t={s.t!r}\n# config_hash={man['config_hash']}\nr,u,ut\n")
                for row in zip(self.grid.nodes, s.u, s.ut):
                    fh.write(",".join(repr(float(x)) for x in row) + "\n")
            files.append(name)
        man["files"] = files
        with open(os.path.join(directory, f"manifest_{man['config_hash']}.json"), "w") as fh:
            json.dump(man, fh, indent=1, sort_keys=True)
        return man


# ---------------------------------------------------------------- the scheme

@lru_cache(maxsize=16)
def _operator(N, h, M):
    grid = RadialGrid.uniform(N, M * h, h)
    r = grid.nodes
    mid = 0.5 * (r[1:] + r[:-1])
    c = mid ** (N - 1) / h
    vol = cell_volumes(grid)
    return grid, c, vol


def laplacian(u, c, vol):
    """Conservative radial Laplacian; the last node is a Dirichlet node (returns 0)."""
    flux = c * (u[1:] - u[:-1])
    out = np.empty_like(u)
    out[0] = flux[0] / vol[0]
    out[1:-1] = (flux[1:] - flux[:-1]) / vol[1:-1]
    out[-1] = 0.0
    return out


@lru_cache(maxsize=16)
def max_frequency2(N, h, M, vmax=0.0):
    """Largest eigenvalue of the discrete -Delta (+ max V) with Dirichlet at r_max."""
    _, c, vol = _operator(N, h, M)
    # interior unknowns 0..M-1; symmetrized by vol^(1/2)
    d = np.empty(M)
    d[0] = c[0] / vol[0]
    d[1:] = (c[1:M] + c[:M - 1]) / vol[1:M]
    e = -c[:M - 1] / np.sqrt(vol[:M - 1] * vol[1:M])
    lam = eigvalsh_tridiagonal(d, e, select="i", select_range=(M - 1, M - 1))[0]
    return float(lam + vmax)


def check_cfl(N, cfg: SolverConfig, V=None):
    """Raise CFLViolationError if dt = cfl h is unstable for the discrete operator."""
    M = int(round(cfg.r_max / cfg.h))
    vmax = float(max(np.max(V), 0.0)) if V is not None else 0.0
    lam = max_frequency2(N, cfg.h, M, vmax)
    dt = cfg.cfl * cfg.h
    if dt * np.sqrt(lam) >= 2.0:
        raise CFLViolationError(
            f"dt={dt:.4g} exceeds the leapfrog limit 2/sqrt(lambda_max)={2 / np.sqrt(lam):.4g}")
    return lam


def discrete_kernel(N, cfg: SolverConfig, potential: Potential, value0, rhs=None):
    """Nodal u with Delta_h u - V u = rhs on every interior node and u_0 = value0.

    Obtained by marching the three-term recurrence outward from the origin.
    The result is an exact stationary state of the scheme (for rhs = 0), which
    the sampled continuum profile is not: its O(h^2) residual excites the
    growing mode of -Delta + V and is amplified like exp(kappa t).
    """
    grid = cfg.grid(N)
    r = grid.nodes
    M = r.size - 1
    _, c, vol = _operator(N, cfg.h, M)
    V = potential.values(N, r)
    f = np.zeros_like(r) if rhs is None else np.asarray(rhs, dtype=float)
    u = np.empty_like(r)
    u[0] = value0
    u[1] = u[0] + vol[0] * (f[0] + V[0] * u[0]) / c[0]
    for i in range(1, M):
        u[i + 1] = u[i] + (vol[i] * (f[i] + V[i] * u[i]) + c[i - 1] * (u[i] - u[i - 1])) / c[i]
    return u


def _resample(p: RadialProfile, grid: RadialGrid):
    if p.r.size == grid.nodes.size and np.allclose(p.r, grid.nodes, rtol=0, atol=1e-12):
        return np.array(p.values, dtype=float)
    x = grid.nodes
    v = hermite_eval(p.r, p.values, p.derivative, x)[0]
    return np.where(x <= p.r[-1], v, 0.0)


def evolve(N, potential: Potential | None, data: CauchyData, forcing: Callable | None,
           T: float, cfg: SolverConfig, monitor: Callable | None = None,
           monitor_every: int = 1, forcing_name: str | None = None,
           exterior_margin: float | None = None) -> WaveTrajectory:
    """Evolve to time T (T < 0 evolves backward) with leapfrog.

    Snapshots are stored at cfg.snapshot_times (default 0, T/8, T/4, T/2, T),
    rounded to the time grid.  ``monitor(t, u, ut)`` is called every
    ``monitor_every`` steps.  Raises DomainTooSmallError when compactly
    supported data would reach within 5h of r_max.

    With ``exterior_margin`` = m the solution is set to zero on r < |t| - m
    after every step.  The region {r > |t|} only depends on its own past, so
    this changes nothing there, while it removes the exponentially growing
    modes of -Delta + V that would otherwise swamp the interior (and leak
    across the cone through grid dispersion).  Values inside r < |t| - m are
    then meaningless.
    """
    potential = potential or Potential.none()
    grid = cfg.grid(N)
    r = grid.nodes
    M = r.size - 1
    u0 = _resample(data.u0, grid)
    u1 = _resample(data.u1, grid)
    sign = 1 if T >= 0 else -1
    if sign < 0:
        u1 = -u1
    Tabs = abs(T)
    sup = data.support_radius
    if np.isfinite(sup) and sup + Tabs + 5 * cfg.h > cfg.r_max:
        raise DomainTooSmallError(
            f"r_max={cfg.r_max} < support {sup:.4g} + T {Tabs:.4g} + 5h")
    V = potential.values(N, r)
    check_cfl(N, cfg, V)
    _, c, vol = _operator(N, cfg.h, M)

    n_steps = max(int(np.ceil(Tabs / (cfg.cfl * cfg.h))), 1) if Tabs > 0 else 0
    dt = Tabs / n_steps if n_steps else cfg.cfl * cfg.h
    times = cfg.snapshot_times or tuple(Tabs * np.array([0, 1 / 8, 1 / 4, 1 / 2, 1]))
    snap_steps = sorted({min(int(round(abs(t) / dt)), n_steps) for t in times})

    def acc(u, t):
        a = laplacian(u, c, vol) - V * u
        if forcing is not None:
            a = a + np.asarray(forcing(sign * t, r), dtype=float)
        a[-1] = 0.0
        return a

    snaps = []
    u0[-1] = 0.0
    u_prev = u0.copy()
    u = u0 + dt * u1 + 0.5 * dt * dt * acc(u0, 0.0)
    u[-1] = 0.0
    if 0 in snap_steps:
        snaps.append(Snapshot(0.0, u_prev.copy(), sign * u1.copy()))
    if monitor is not None:
        monitor(0.0, u_prev, sign * u1)
    cut = None if exterior_margin is None else float(exterior_margin)
    for n in range(1, n_steps + 1):
        u_next = 2 * u - u_prev + dt * dt * acc(u, n * dt)
        if cut is not None:
            k = int(np.searchsorted(r, (n + 1) * dt - cut))
            if k > 0:
                u_next[:k] = 0.0
        if n in snap_steps or (monitor is not None and n % monitor_every == 0):
            ut = (u_next - u_prev) / (2 * dt)
            if n in snap_steps:
                snaps.append(Snapshot(sign * n * dt, u.copy(), sign * ut))
            if monitor is not None and n % monitor_every == 0:
                monitor(sign * n * dt, u, sign * ut)
        u_prev, u = u, u_next
    return WaveTrajectory(grid, snaps, cfg, potential, forcing_name or (None if forcing is None else "custom"),
                          sign, sup, {"dt": dt, "steps": n_steps, "exterior_margin": cut})


def evolve_both(N, potential, data, T, cfg, **kw):
    """Forward and backward trajectories (for E_out^+ and E_out^-)."""
    return evolve(N, potential, data, None, T, cfg, **kw), evolve(N, potential, data, None, -T, cfg, **kw)


# ---------------------------------------------------------------- radiation profile

@dataclass(frozen=True)
class RadiationProfile:
    rho: np.ndarray
    G: np.ndarray
    window: tuple
    convergence: float
    companion_residual: float

    @property
    def norm2(self):
        return float(np.trapezoid(self.G**2, self.rho)) if self.rho.size > 1 else 0.0

    @property
    def energy(self):
        """2 ||G_+||^2, the outgoing exterior energy it carries."""
        return 2.0 * self.norm2


def radiation_profile(traj: WaveTrajectory, window=None, n_last=3, tol=0.1) -> RadiationProfile:
    """G_+(rho) from r^((N-1)/2) d_t u and -r^((N-1)/2) d_r u at r = |t| + rho.

    The two extractions are averaged over the last ``n_last`` snapshots (the
    mean of the pair cancels their leading 1/t error).  Raises
    NotConvergedError when they differ by more than ``tol`` relative in L^2.
    """
    grid = traj.grid
    N = grid.dimension
    k = (N - 1) / 2.0
    h = traj.config.h
    snaps = [s for s in traj.snapshots if s.t != 0][-n_last:]
    if not snaps:
        raise ValueError("trajectory has no snapshot after t=0")
    t_last = abs(snaps[-1].t)
    if window is None:
        hi = traj.clean_radius(t_last) - t_last
        if np.isfinite(traj.support_radius):
            hi = min(hi, traj.support_radius + 2 * h)
        window = (0.0, hi)
    lo, hi = window
    rho = np.arange(lo, hi + 0.5 * h, h)
    gts, grs = [], []
    for s in snaps:
        x = abs(s.t) + rho
        ur = np.gradient(s.u, grid.nodes, edge_order=2)
        gts.append(x**k * np.interp(x, grid.nodes, s.ut, right=0.0))
        grs.append(-x**k * np.interp(x, grid.nodes, ur, right=0.0))
    gts, grs = np.array(gts), np.array(grs)
    pair = 0.5 * (gts + grs)
    G = pair.mean(axis=0)
    nrm = np.sqrt(np.trapezoid(G**2, rho)) if rho.size > 1 else 0.0
    if nrm == 0:
        return RadiationProfile(rho, G, (lo, hi), 0.0, 0.0)
    comp = float(np.sqrt(np.trapezoid((gts[-1] - grs[-1]) ** 2, rho)) / nrm)
    spread = float(max(np.sqrt(np.trapezoid((p - G) ** 2, rho)) for p in pair) / nrm)
    if comp > tol:
        raise NotConvergedError(
            f"d_t and -d_r extractions differ by {comp:.3g} (relative) > {tol}")
    return RadiationProfile(rho, G, (lo, hi), spread, comp)


# ---------------------------------------------------------------- extension, convergence

def extend_exterior_data(u: RadialProfile, R: float) -> RadialProfile:
    """u_R(r) = 3u(2R-r) - 2u(3R-2r) for r < R and u(r) for r >= R (C^1 at R)."""
    if R <= 0:
        raise ValueError("R must be positive")
    r = u.r
    if 3 * R > r[-1]:
        raise DomainTooSmallError(f"extension needs the grid to reach 3R={3 * R:g}")
    v = np.array(u.values, dtype=float)
    d = np.array(u.derivative, dtype=float)
    ins = r < R
    a, da = hermite_eval(r, u.values, u.derivative, 2 * R - r[ins])
    b, db = hermite_eval(r, u.values, u.derivative, 3 * R - 2 * r[ins])
    v[ins] = 3 * a - 2 * b
    d[ins] = -3 * da + 4 * db
    return RadialProfile(u.grid, v, d, "Custom")


def convergence_study(problem: Callable, resolutions: Sequence[float]) -> dict:
    """Observed orders from ``problem(h) -> {diagnostic: error}``.

    ``resolutions`` must be >= 3 steps in geometric progression.
    """
    hs = np.asarray(resolutions, dtype=float)
    if hs.size < 3:
        raise ValueError("need at least three resolutions")
    q = hs[:-1] / hs[1:]
    if not np.allclose(q, q[0], rtol=1e-9) or q[0] <= 1:
        raise ValueError("resolutions must decrease geometrically")
    runs = [problem(h) for h in hs]
    out = {}
    for key in runs[0]:
        e = np.array([abs(run[key]) for run in runs])
        with np.errstate(divide="ignore", invalid="ignore"):
            orders = np.log(e[:-1] / e[1:]) / np.log(q[0])
        out[key] = {"h": hs.tolist(), "errors": e.tolist(), "orders": orders.tolist(),
                    "observed": float(orders[-1]), "ratio": float(e[-2] / e[-1])}
    return out
