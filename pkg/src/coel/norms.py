"""Dyadic weighted norms, span distances, exterior energies and cone norms.

Radial integrals are taken against r^(N-1) dr (no sphere area), the same
convention as in ``profiles``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from . import quadrature as qd
from .errors import DegenerateBasisError, GridSpanError, NotConvergedError
from .grid import RadialGrid, RadialProfile, hermite_eval

PER_OCTAVE = 8


def japanese(x):
    return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)


@dataclass(frozen=True)
class ConeSpec:
    """Exterior cone {r > R + |t - vertex_time|}.

    ``outer`` (optional) caps the region at r < outer + |t - vertex_time|;
    ``shape="max"`` gives instead {r > max(|t - vertex_time|, R)}.
    """
    vertex_time: float = 0.0
    R: float = 0.0
    direction: str = "both"
    outer: Optional[float] = None
    shape: str = "cone"

    def __post_init__(self):
        if self.R < 0:
            raise ValueError("cone base radius must be >= 0")
        if self.direction not in ("forward", "backward", "both"):
            raise ValueError(f"bad direction {self.direction!r}")
        if self.shape not in ("cone", "max"):
            raise ValueError(f"bad shape {self.shape!r}")

    def bounds(self, t):
        s = np.abs(np.asarray(t, dtype=float) - self.vertex_time)
        lo = np.maximum(s, self.R) if self.shape == "max" else self.R + s
        hi = np.inf if self.outer is None else self.outer + s
        return lo, hi


@dataclass
class NormReport:
    name: str
    value: float
    sup_attained_at: Optional[float] = None
    resolution: dict = field(default_factory=dict)
    converged: bool = True
    boundary: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise ValueError(f"norm value must be finite and >= 0, got {self.value}")

    def to_json(self):
        d = {"name": self.name, "value": float(self.value),
             "R_star": None if self.sup_attained_at is None else float(self.sup_attained_at),
             "resolution": self.resolution, "converged": bool(self.converged),
             "boundary": bool(self.boundary)}
        d.update({k: _plain(v) for k, v in self.extra.items()})
        return json.dumps(d, sort_keys=True)


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


# ---------------------------------------------------------------- shell integrals

def gradient_profile(f: RadialProfile) -> RadialProfile:
    """The profile of d_r f (second derivative by centered differences)."""
    d2 = np.gradient(f.derivative, f.r, edge_order=2)
    return RadialProfile(f.grid, f.derivative, d2, "Custom")


def _support(values, r):
    nz = np.nonzero(np.nan_to_num(values, nan=1.0))[0]
    if nz.size == 0:
        return None
    lo = r[max(nz[0] - 1, 0)]
    hi = r[min(nz[-1] + 1, r.size - 1)]
    return lo, hi


def _scan_radii(lo, hi):
    """Points 2^(j/8) with lo <= R and 2R <= hi (plus rounding slack)."""
    j0 = np.ceil(PER_OCTAVE * np.log2(lo) - 1e-9)
    j1 = np.floor(PER_OCTAVE * (np.log2(hi) - 1.0) + 1e-9)
    if j1 < j0:
        return np.empty(0)
    return 2.0 ** (np.arange(j0, j1 + 1) / PER_OCTAVE)


def _scan_for(profiles: Sequence[RadialProfile], lower=None):
    """Dyadic scan for sampled profiles and which ends are grid-limited."""
    r = profiles[0].r
    sup = [_support(p.values, r) for p in profiles]
    sup = [s for s in sup if s is not None]
    r_first = r[1]
    if not sup:
        return np.empty(0), (True, True)
    a = min(s[0] for s in sup)
    b = max(s[1] for s in sup)
    lo_lim = max(r_first, a / 2.0)
    hi_lim = min(r[-1], 2.0 * b)
    if lower is not None:
        lo_lim = max(lo_lim, lower)
    grid_lo = lo_lim <= r_first * (1 + 1e-12) and lower is None
    grid_hi = b >= r[-1] * (1 - 1e-12)
    return _scan_radii(lo_lim, hi_lim), (grid_lo, grid_hi)


def shell_gram(profiles: Sequence[RadialProfile], radii, n=8):
    """Matrices S[k, a, b] = int_{R_k}^{2R_k} f_a f_b r^(N-1) dr."""
    grid = profiles[0].grid
    r = grid.nodes
    N = grid.dimension
    radii = np.asarray(radii, dtype=float)
    m = len(profiles)
    if radii.size == 0:
        return np.zeros((0, m, m))
    lo, hi = radii[0], 2 * radii[-1]
    inner = r[(r > lo) & (r < hi)]
    edges = np.unique(np.concatenate([inner, radii, 2 * radii]))
    x, w = qd.gauss_legendre(n)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    pts = 0.5 * (a + b)[:, None] + half[:, None] * x[None, :]
    wts = half[:, None] * w[None, :] * pts ** (N - 1)
    vals = np.stack([hermite_eval(r, p.values, p.derivative, pts)[0] for p in profiles])
    cells = np.einsum("aci,bci,ci->cab", vals, vals, wts)
    i0 = np.searchsorted(edges, radii)
    i1 = np.searchsorted(edges, 2 * radii)
    return np.stack([cells[s:e].sum(axis=0) for s, e in zip(i0, i1)])


def _callable_shells(f, radii, N, breakpoints=()):
    out = np.empty(len(radii))
    for k, R in enumerate(radii):
        out[k] = qd.integrate(lambda x: np.asarray(f(x)) ** 2 * x ** (N - 1), R, 2 * R,
                              rtol=1e-10, breakpoints=breakpoints)
    return out


def _z_weights(radii, N, alpha, log_centers=(1.0,), logged=True, log_ref=None):
    w = np.asarray(radii, dtype=float) ** (-N / 2.0 - alpha)
    if logged:
        ref = 1.0 if log_ref is None else log_ref
        br = np.min([japanese(np.log(radii / (c * ref))) for c in log_centers], axis=0)
        w = w / br
    return w


def _sup_report(name, shells, radii, weights, edges_grid_limited, on_boundary, meta):
    if radii.size == 0 or np.all(shells <= 0):
        return NormReport(name, 0.0, None, meta)
    vals = weights * np.sqrt(np.maximum(shells, 0.0))
    k = int(np.argmax(vals))
    at_edge = (k == 0 and edges_grid_limited[0]) or (k == radii.size - 1 and edges_grid_limited[1])
    rep = NormReport(name, float(vals[k]), float(radii[k]), meta, boundary=bool(at_edge))
    if at_edge and on_boundary == "raise":
        raise GridSpanError(f"{name}: sup attained at the edge of the scan, R*={radii[k]:.4g}")
    return rep


def _resolve(f, N, support, scan):
    """Shell energies and scan metadata for a profile or a callable."""
    if isinstance(f, RadialProfile):
        N = f.dimension
        if scan is not None:
            radii = _scan_radii(*scan)
            limited = (False, False)
        else:
            radii, limited = _scan_for([f])
        shells = shell_gram([f], radii)[:, 0, 0] if radii.size else np.empty(0)
        meta = {"grid": f.grid.describe(), "per_octave": PER_OCTAVE}
        return N, radii, shells, limited, meta
    N = 6 if N is None else N
    if support is None and scan is None:
        raise ValueError("a callable needs an explicit support or scan range")
    lo, hi = scan if scan is not None else (support[0] / 2.0, 2.0 * support[1])
    radii = _scan_radii(lo, hi)
    bps = tuple(support) if support is not None else ()
    shells = _callable_shells(f, radii, N, bps)
    meta = {"support": list(support) if support else None, "per_octave": PER_OCTAVE}
    return N, radii, shells, (support is None, support is None), meta


def z_norm(f, alpha, variant="logged", N=None, support=None, scan=None,
           on_boundary="raise") -> NormReport:
    """sup_R R^(-N/2-alpha) / <log R> ||f||_{L^2(R<r<2R)} over R = 2^(j/8).

    ``variant="unlogged"`` drops the logarithmic weight.  ``f`` is a
    RadialProfile or a vectorized callable with an explicit ``support``
    (a, b).  A sup found at a grid-limited edge of the scan raises
    GridSpanError (or is only flagged with ``on_boundary="flag"``).
    """
    N, radii, shells, limited, meta = _resolve(f, N, support, scan)
    w = _z_weights(radii, N, alpha, logged=(variant == "logged"))
    return _sup_report(f"Z_{alpha:g}" + ("" if variant == "logged" else "~"),
                       shells, radii, w, limited, on_boundary, meta)


def z_multi_norm(f, alpha, lam, N=None, support=None, scan=None,
                 on_boundary="raise") -> NormReport:
    """Soliton-adapted norm with weight 1 / min_j <log(R/lambda_j)>."""
    scales = np.asarray(getattr(lam, "scales", lam), dtype=float)
    if np.any(scales <= 0) or np.any(np.diff(scales) >= 0):
        raise ValueError("scales must be positive and strictly decreasing")
    N, radii, shells, limited, meta = _resolve(f, N, support, scan)
    w = _z_weights(radii, N, alpha, log_centers=tuple(scales))
    meta = dict(meta, scales=scales.tolist())
    return _sup_report(f"Z_{alpha:g},lambda", shells, radii, w, limited, on_boundary, meta)


def z_local_norm(f, alpha, R, variant="logged", on_boundary="raise") -> NormReport:
    """sup_{rho >= R} rho^(-N/2-alpha) / <log(rho/<R>)> ||f||_{L^2(rho<r<2rho)}.

    rho runs over R 2^(j/8), j >= 0 (all of 2^(j/8) when R = 0).
    """
    radii, weights, limited = _local_scan([f], alpha, R, variant)
    shells = shell_gram([f], radii)[:, 0, 0] if radii.size else np.empty(0)
    meta = {"grid": f.grid.describe(), "R": R}
    return _sup_report(f"Z_{alpha:g},R", shells, radii, weights, limited, on_boundary, meta)


def _local_scan(profiles, alpha, R, variant):
    N = profiles[0].dimension
    r = profiles[0].r
    if R <= 0:
        radii, limited = _scan_for(profiles)
    else:
        sup = [_support(p.values, r) for p in profiles]
        b = max([s[1] for s in sup if s is not None] + [R])
        hi = min(r[-1], 2 * b)
        j1 = np.floor(PER_OCTAVE * (np.log2(hi / R) - 1.0) + 1e-9)
        radii = R * 2.0 ** (np.arange(0, max(j1, -1) + 1) / PER_OCTAVE)
        limited = (False, b >= r[-1] * (1 - 1e-12))
    w = radii ** (-N / 2.0 - alpha)
    if variant == "logged":
        w = w / japanese(np.log(radii / japanese(R)))
    return radii, w, limited


# ---------------------------------------------------------------- span distances

@dataclass(frozen=True)
class NormSpec:
    """Which norm a span distance is measured in.

    kind: "z" (global), "z_local" (exterior of R), "z_multi" (scales lam),
    "L2" or "H1dot" (exterior of R when R > 0).
    """
    kind: str = "z_local"
    alpha: float = -3.0
    R: float = 0.0
    variant: str = "logged"
    lam: tuple = ()


def _weighted_inner(profiles, R, derivative=False, n=8):
    """Gram matrix of int_R^inf f_a f_b r^(N-1) (or of the derivatives)."""
    r = profiles[0].r
    N = profiles[0].dimension
    i0 = int(np.searchsorted(r, R)) if R > 0 else 0
    if i0 == 0 and any(not np.isfinite(p.values[0]) for p in profiles):
        i0 = 1
    a, b = r[i0:-1], r[i0 + 1:]
    x, w = qd.gauss_legendre(n)
    half = 0.5 * (b - a)
    pts = 0.5 * (a + b)[:, None] + half[:, None] * x[None, :]
    wts = half[:, None] * w[None, :] * pts ** (N - 1)
    k = 1 if derivative else 0
    vals = np.stack([hermite_eval(r, p.values, p.derivative, pts)[k] for p in profiles])
    return np.einsum("aci,bci,ci->ab", vals, vals, wts)


def span_distance(f: RadialProfile, basis: Sequence[RadialProfile], spec: NormSpec,
                  tol=1e-6) -> NormReport:
    """inf over c of ||f - sum c_i b_i|| in the norm described by ``spec``.

    For Z-type norms the squared shell norms are quadratic in c, so the
    objective is convex; it is minimized by Nelder-Mead started from the
    weighted least-squares minimizer.  Raises DegenerateBasisError when the
    basis Gram matrix has condition number above 1e10.
    """
    allp = [f] + list(basis)
    m = len(basis)
    if spec.kind in ("L2", "H1dot"):
        G = _weighted_inner(allp, spec.R, derivative=(spec.kind == "H1dot"))
        if m == 0:
            return NormReport(f"d_{spec.kind}", float(np.sqrt(max(G[0, 0], 0.0))))
        B = G[1:, 1:]
        cond = _check_basis(B)
        c = np.linalg.solve(B, G[1:, 0])
        d2 = G[0, 0] - 2 * c @ G[1:, 0] + c @ B @ c
        return NormReport(f"d_{spec.kind}", float(np.sqrt(max(d2, 0.0))),
                          extra={"coefficients": c.tolist(), "gram_condition": cond})

    if spec.kind == "z_local":
        radii, w, limited = _local_scan(allp, spec.alpha, spec.R, spec.variant)
    else:
        radii, limited = _scan_for(allp)
        N = f.dimension
        centers = tuple(spec.lam) if spec.kind == "z_multi" else (1.0,)
        w = _z_weights(radii, N, spec.alpha, log_centers=centers,
                       logged=(spec.variant == "logged"))
    S = shell_gram(allp, radii)
    meta = {"grid": f.grid.describe(), "kind": spec.kind, "R": spec.R}

    def shells_for(c):
        c1 = np.concatenate([[1.0], -np.asarray(c)])
        return np.einsum("a,kab,b->k", c1, S, c1)

    def objective(c):
        return float(np.max(w * np.sqrt(np.maximum(shells_for(c), 0.0))))

    if m == 0:
        return _sup_report("d_Z", S[:, 0, 0], radii, w, limited, "flag", meta)
    # seed: minimize sum_k w_k^2 ||f - c.b||^2_{shell k}
    Ws = np.einsum("k,kab->ab", w**2, S)
    B = Ws[1:, 1:]
    cond = _check_basis(B)
    c0 = np.linalg.solve(B, Ws[1:, 0])
    f0 = objective(c0)
    scale = np.maximum(np.abs(c0), 1e-3 * max(np.max(np.abs(c0)), 1.0))
    simplex = np.vstack([c0] + [c0 + 0.1 * scale[i] * np.eye(m)[i] for i in range(m)])
    res = minimize(objective, c0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": tol * max(1.0, np.max(np.abs(c0))),
                            "fatol": tol * max(f0, 1e-300), "maxiter": 4000 * m})
    c = res.x if res.fun <= f0 else c0
    rep = _sup_report("d_Z", shells_for(c), radii, w, limited, "flag", meta)
    rep.extra.update({"coefficients": np.asarray(c).tolist(), "gram_condition": cond,
                      "seed_value": f0})
    return rep


def _check_basis(B):
    ev = np.linalg.eigvalsh(B)
    if ev[0] <= 0:
        raise DegenerateBasisError("basis Gram matrix is singular")
    cond = float(ev[-1] / ev[0])
    if cond > 1e10:
        raise DegenerateBasisError(f"basis Gram condition {cond:.3g} exceeds 1e10")
    return cond


# ---------------------------------------------------------------- exterior energy

def cell_volumes(grid: RadialGrid):
    """int r^(N-1) over the dual cells [r_i - h_-/2, r_i + h_+/2]."""
    r = grid.nodes
    N = grid.dimension
    mid = 0.5 * (r[1:] + r[:-1])
    lo = np.concatenate([[0.0], mid])
    hi = np.concatenate([mid, [r[-1]]])
    return (hi**N - lo**N) / N


def exterior_sum(grid: RadialGrid, u, ut, rmin, V=None, rmax=None):
    """Discrete int_{rmin < r < rmax} (ut^2 + ur^2 (+ V u^2)) r^(N-1), from the first node >= rmin.

    The gradient part uses one-sided differences on the staggered mid-points,
    which makes it the energy conserved by the leapfrog scheme.  ``rmax``
    (default: the grid edge) keeps nodes <= rmax and cells entirely below it.
    Returns (energy, sub-cell remainder estimate).
    """
    r = grid.nodes
    N = grid.dimension
    i0 = int(np.searchsorted(r, rmin - 1e-12 * max(1.0, rmin)))
    i1 = r.size if rmax is None else int(np.searchsorted(r, rmax, side="right"))
    if i0 >= i1:
        return 0.0, 0.0
    vol = cell_volumes(grid)
    mid = 0.5 * (r[1:] + r[:-1])
    hh = np.diff(r)
    grad = ((u[1:] - u[:-1]) / hh) ** 2 * mid ** (N - 1) * hh
    kin = vol * ut**2
    e = kin[i0:i1].sum() + grad[i0:i1 - 1].sum()
    if V is not None:
        e += (vol * V * u**2)[i0:i1].sum()
    gap = r[i0] - rmin
    dens = (kin[i0] / vol[i0] if vol[i0] > 0 else 0.0) + (grad[i0] / hh[i0] if i0 < hh.size else 0.0)
    return float(e), float(abs(gap) * dens)


def _direction_trajs(traj):
    if isinstance(traj, (tuple, list)):
        return {("forward" if t.time_sign > 0 else "backward"): t for t in traj}
    return {("forward" if traj.time_sign > 0 else "backward"): traj}


def exterior_energy(traj, cone: ConeSpec = ConeSpec(), p=1.0, tol=0.25,
                    strict=False) -> NormReport:
    """Energy of the final snapshot on {r > R + |t - t_vertex|}, plus Richardson.

    ``traj`` is a WaveTrajectory or a (forward, backward) pair.  The
    Richardson estimate uses the final time T and the snapshot closest to T/2
    with error model E(t) = E_inf + a t^-p.  ``converged`` is set when the two
    estimates agree within ``tol`` (relative); ``strict`` turns a failure into
    NotConvergedError.
    """
    by_dir = _direction_trajs(traj)
    dirs = ("forward", "backward") if cone.direction == "both" else (cone.direction,)
    total = extra_total = remainder = 0.0
    parts = {}
    for d in dirs:
        if d not in by_dir:
            raise ValueError(f"no {d} trajectory supplied")
        tr = by_dir[d]
        snaps = tr.snapshots
        last = snaps[-1]
        T = abs(last.t)
        half = min(snaps[:-1], key=lambda s: abs(abs(s.t) - T / 2)) if len(snaps) > 1 else last
        e1, rem = exterior_sum(tr.grid, last.u, last.ut, cone.bounds(last.t)[0])
        e0, _ = exterior_sum(tr.grid, half.u, half.ut, cone.bounds(half.t)[0])
        t0, t1 = abs(half.t - cone.vertex_time), abs(last.t - cone.vertex_time)
        if t0 > 0 and t1 > t0:
            q = (t1 / t0) ** p
            ex = max(e1 + (e1 - e0) / (q - 1.0), 0.0)
        else:
            ex = e1
        parts[d] = {"final": e1, "half": e0, "extrapolated": ex, "T": T}
        total += e1
        extra_total += ex
        remainder += rem
    scale = max(total, 1e-300)
    converged = abs(extra_total - total) <= tol * scale or total == 0.0
    rep = NormReport("E_out", total, None,
                     {"sub_cell_remainder": remainder, "richardson_p": p},
                     converged=converged,
                     extra={"extrapolated": extra_total, "parts": parts})
    if strict and not converged:
        raise NotConvergedError(
            f"E_out final {total:.6g} vs extrapolated {extra_total:.6g} differ beyond {tol}")
    return rep


# ---------------------------------------------------------------- cone space-time norms

@dataclass(frozen=True)
class SampledField:
    """u(t_k, r_i) on a tensor grid; values has shape (len(t), len(r))."""
    t: np.ndarray
    r: np.ndarray
    values: np.ndarray
    dimension: int = 6


def _trap_region(r, v, lo, hi, N):
    sel = (r >= lo) & (r <= hi)
    if sel.sum() < 2:
        return 0.0
    return float(np.trapezoid(v[sel] * r[sel] ** (N - 1), r[sel]))


def _fixed_radial(g, lo, hi, n=32):
    """int_lo^hi g by fixed composite Gauss-Legendre rules.

    Finite ranges use 8 equal panels.  Infinite ranges are mapped by
    r = a/tau onto (0, 1] with dyadic panels in tau (a = max(lo, 1) after
    an initial finite piece), which resolves algebraic tails; the fixed
    rule avoids adaptive refinement on values near underflow.
    """
    x, w = qd.gauss_legendre(n)

    def rule(f, a, b):
        half = 0.5 * (b - a)
        pts = 0.5 * (a + b)[:, None] + half[:, None] * x[None, :]
        return float(np.sum(half * (np.asarray(f(pts), dtype=float) @ w)))

    if hi < np.inf:
        if hi <= lo:
            return 0.0
        e = np.linspace(lo, hi, 9)
        return rule(g, e[:-1], e[1:])
    total = 0.0
    a = max(lo, 1.0)
    if a > lo:
        e = np.linspace(lo, a, 9)
        total += rule(g, e[:-1], e[1:])
    e = 2.0 ** -np.arange(48, -1, -1, dtype=float)
    total += rule(lambda tau: g(a / tau) * a / tau**2, e[:-1], e[1:])
    return total


def cone_spacetime_norm(u, cone: ConeSpec, p, q, N=6, t_range=(-np.inf, np.inf),
                        rtol=1e-8) -> float:
    """||u||_{L^p_t L^q_r} over the cone region (p, q) in {(1, 2), (2, 4)}.

    ``u`` is a SampledField (trapezoid rule on the nodes inside the region)
    or a vectorized callable u(t, r) (nested adaptive quadrature; infinite
    time ranges are mapped to finite ones).
    """
    if (p, q) not in ((1, 2), (2, 4)):
        raise ValueError("(p, q) must be (1, 2) or (2, 4)")
    if cone.direction == "forward":
        t_range = (max(t_range[0], cone.vertex_time), t_range[1])
    elif cone.direction == "backward":
        t_range = (t_range[0], min(t_range[1], cone.vertex_time))
    if isinstance(u, SampledField):
        N = u.dimension
        sel = (u.t >= t_range[0]) & (u.t <= t_range[1])
        ts = u.t[sel]
        inner = np.empty(ts.size)
        for k, (t, row) in enumerate(zip(ts, u.values[sel])):
            lo, hi = cone.bounds(t)
            inner[k] = _trap_region(u.r, np.abs(row) ** q, lo, hi, N) ** (p / q)
        if ts.size < 2:
            return 0.0
        return float(np.trapezoid(inner, ts) ** (1.0 / p))

    def inner(ts):
        ts = np.asarray(ts, dtype=float)
        out = np.empty(ts.size)
        for k, t in enumerate(ts.ravel()):
            lo, hi = cone.bounds(t)
            g = lambda r: np.abs(u(t, r)) ** q * r ** (N - 1)
            out[k] = max(_fixed_radial(g, lo, hi), 0.0) ** (p / q)
        return out.reshape(ts.shape)

    total = 0.0
    c = cone.vertex_time
    pieces = []
    if t_range[0] < c:
        pieces.append((max(t_range[0], -np.inf), min(t_range[1], c), -1))
    if t_range[1] > c:
        pieces.append((max(t_range[0], c), t_range[1], +1))
    for a, b, sgn in pieces:
        # integrate in s = |t - c| from s_a to s_b
        s_a, s_b = sorted((abs(a - c), abs(b - c)))
        f = lambda s: inner(c + sgn * s)
        if s_b == np.inf:
            split = max(s_a, 1.0, 2 * cone.R)
            total += qd.integrate(f, s_a, split, rtol=rtol * 10) if split > s_a else 0.0
            total += qd.tail_integral(f, split, rtol=rtol * 10)
        else:
            total += qd.integrate(f, s_a, s_b, rtol=rtol * 10)
    return float(total ** (1.0 / p))
