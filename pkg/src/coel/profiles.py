"""Static radial profiles of the linearized operator -Delta + V around W.

Radial integrals throughout the package are taken against r^(N-1) dr, i.e.
without the area of the unit sphere.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_simpson

from . import quadrature as qd
from .cutoffs import cutoff
from .errors import (NormalizationError, SignChangeError, TailDivergenceError,
                     UnsupportedDimensionError)
from .grid import Asymptote, RadialGrid, RadialProfile


def _params(N):
    if N not in (6, 8):
        raise UnsupportedDimensionError(f"profiles exist for N in (6, 8), got {N}")
    return N * (N - 2.0), (N - 2) / 2.0


def zero_of_lambda_w(N):
    return float(np.sqrt(_params(N)[0]))


# ---------------------------------------------------------------- closed forms

def ground_state(N, r):
    a, p = _params(N)
    return (1.0 + np.asarray(r, dtype=float) ** 2 / a) ** (-p)


def ground_state_deriv(N, r):
    a, p = _params(N)
    r = np.asarray(r, dtype=float)
    return -p * (2 * r / a) * (1.0 + r * r / a) ** (-p - 1)


def potential(N, r):
    """V = -(N+2)/(N-2) W^(4/(N-2)); -2W in 6d and -(5/3) W^(2/3) in 8d."""
    _params(N)
    if N == 6:
        return -2.0 * ground_state(6, r)
    return -(5.0 / 3.0) * ground_state(8, r) ** (2.0 / 3.0)


def potential_deriv(N, r):
    _params(N)
    if N == 6:
        return -2.0 * ground_state_deriv(6, r)
    w = ground_state(8, r)
    return -(10.0 / 9.0) * w ** (-1.0 / 3.0) * ground_state_deriv(8, r)


def lambda_w(N, r):
    """r W'(r) + (N-2)/2 W(r) = p (1 - y)(1 + y)^(-p-1), y = r^2/(N(N-2))."""
    a, p = _params(N)
    y = np.asarray(r, dtype=float) ** 2 / a
    return p * (1.0 - y) * (1.0 + y) ** (-p - 1)


def lambda_w_deriv(N, r):
    a, p = _params(N)
    r = np.asarray(r, dtype=float)
    y = r * r / a
    return -(2 * p * r / a) * (1.0 + y) ** (-p - 2) * ((p + 2) - p * y)


def lambda_w_norm2(N):
    """int_0^inf (Lambda W)^2 r^(N-1) dr, exact (Beta integrals in y)."""
    if N == 6:
        return 2.0 * 24.0**3 * (2.0 / 15.0)
    if N == 8:
        return 9.0 * 48.0**4 / (2.0 * 84.0)
    raise UnsupportedDimensionError(str(N))


def gamma_coefficient_at_zero(N):
    """c in Gamma(r) ~ c r^(2-N) as r -> 0."""
    _, p = _params(N)
    return 1.0 / ((N - 2) * p)


# ---------------------------------------------------------------- second solution

class _GammaKernel:
    """Gamma = -Lambda W(r) int_1^r s^(1-N) (Lambda W)^-2 ds, regularized.

    Writing Lambda W = q(s)(r0 - s) and h = s^(1-N)/q^2, the integrand is
    h/(s-r0)^2.  Subtracting the first two Taylor terms of h at r0 leaves a
    smooth integrand; the subtracted part integrates in closed form and the
    pole of the representation cancels against the zero of Lambda W.
    """

    def __init__(self, N):
        self.N = N
        self.a, self.p = _params(N)
        self.r0 = np.sqrt(self.a)
        self.h0 = float(self.h(self.r0))
        self.h1 = float(self.dh(self.r0))
        # Taylor coefficients of h at r0 (through a Chebyshev interpolant of h
        # itself) give phi inside |s - r0| < w without cancellation
        w = 0.3
        cheb = np.polynomial.chebyshev.Chebyshev.interpolate(
            self.h, 40, domain=[self.r0 - w, self.r0 + w])
        coef = cheb.convert(kind=np.polynomial.Polynomial, domain=cheb.domain).coef
        self._near = np.polynomial.Polynomial(coef[2:] / w**2)
        self._w = w
        self._hole = w

    def q(self, s):
        a, p, r0 = self.a, self.p, self.r0
        return (p / a) * (r0 + s) * (1 + s * s / a) ** (-p - 1)

    def dq(self, s):
        a, p, r0 = self.a, self.p, self.r0
        return (p / a) * ((1 + s * s / a) ** (-p - 1)
                          - (r0 + s) * (p + 1) * (2 * s / a) * (1 + s * s / a) ** (-p - 2))

    def h(self, s):
        return s ** (1.0 - self.N) / self.q(s) ** 2

    def dh(self, s):
        return self.h(s) * ((1.0 - self.N) / s - 2 * self.dq(s) / self.q(s))

    def _phi_direct(self, s):
        s = np.asarray(s, dtype=float)
        d = s - self.r0
        return (self.h(s) - self.h0 - self.h1 * d) / (d * d)

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        x = np.atleast_1d(s)
        near = np.abs(x - self.r0) < self._hole
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.atleast_1d(self._phi_direct(np.where(near, self.r0 + 1.0, x)))
        if np.any(near):
            out[near] = self._near((x[near] - self.r0) / self._w)
        return out.reshape(s.shape)

    def evaluate(self, x, rtol=1e-12):
        """(Gamma, Gamma') at positive points x (any order)."""
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        if np.any(flat <= 0):
            raise ValueError("Gamma is singular at r=0")
        order = np.argsort(flat)
        xs = flat[order]
        lo, hi = min(xs[0], 1.0), max(xs[-1], 1.0)
        nodes = np.unique(np.concatenate([xs, [lo, hi, 1.0]]))
        bps = [self.r0 - self._hole, self.r0, self.r0 + self._hole]
        F = qd.cumulative(self.phi, nodes, anchor=1.0, breakpoints=bps, rtol=rtol)
        Fx = F[np.searchsorted(nodes, xs)]
        lw = lambda_w(self.N, xs)
        dlw = lambda_w_deriv(self.N, xs)
        with np.errstate(divide="ignore"):
            logt = np.where(xs == self.r0, 0.0,
                            np.log(np.abs((xs - self.r0) / (1.0 - self.r0))))
        base = Fx + self.h0 / (1.0 - self.r0) + self.h1 * logt
        qx = self.q(xs)
        g = -lw * base - qx * self.h0
        dg = -dlw * base - lw * self.phi(xs) + qx * self.h1 - self.dq(xs) * self.h0
        g[xs == 1.0] = 0.0
        out_g = np.empty_like(flat)
        out_d = np.empty_like(flat)
        out_g[order] = g
        out_d[order] = dg
        return out_g.reshape(x.shape), out_d.reshape(x.shape)


@lru_cache(maxsize=4)
def _kernel(N):
    return _GammaKernel(N)


def gamma_values(N, r):
    """Gamma and Gamma' at positive radii."""
    return _kernel(N).evaluate(r)


def _positive(grid):
    r = grid.nodes
    return r > 0, r[r > 0]


def gamma_profile(N, grid: RadialGrid) -> RadialProfile:
    """Second radial zero of -Delta+V with Gamma(1)=0 and Wronskian r^(1-N).

    Gamma Lambda W' - Lambda W Gamma' = r^(1-N).  nan at r=0.
    """
    pos, rp = _positive(grid)
    g = np.full(grid.nodes.shape, np.nan)
    dg = np.full(grid.nodes.shape, np.nan)
    g[pos], dg[pos] = gamma_values(N, rp)
    asym = (Asymptote("zero", 2.0 - N, gamma_coefficient_at_zero(N)),)
    kind = "Gamma" if N == 6 else "T00"
    return RadialProfile(grid, g, dg, kind, asym)


def lambda_w_profile(N, grid: RadialGrid) -> RadialProfile:
    r = grid.nodes
    kind = "LambdaW" if N == 6 else "TInf0"
    return RadialProfile(grid, lambda_w(N, r), lambda_w_deriv(N, r), kind)


def ground_state_profile(N, grid):
    r = grid.nodes
    return RadialProfile(grid, ground_state(N, r), ground_state_deriv(N, r), "W")


def potential_profile(N, grid):
    r = grid.nodes
    return RadialProfile(grid, potential(N, r), potential_deriv(N, r), "V")


def wronskian_defect(N, r):
    """max |r^(N-1)(Gamma LW' - LW Gamma') - 1| over the given radii."""
    r = np.asarray(r, dtype=float)
    g, dg = gamma_values(N, r)
    w = r ** (N - 1) * (g * lambda_w_deriv(N, r) - lambda_w(N, r) * dg)
    return float(np.max(np.abs(w - 1.0)))


def truncated_gamma(grid: RadialGrid, inner=10.0, outer=12.0) -> RadialProfile:
    """chi0 * Gamma with chi0 = 1 on r <= 10 and 0 on r >= 12 (C^2 quintic)."""
    gam = gamma_profile(6, grid)
    chi, dchi, _ = cutoff(grid.nodes, inner, outer)
    with np.errstate(invalid="ignore"):
        v = np.where(chi == 0, 0.0, chi * gam.values)
        d = np.where(chi == 0, 0.0, dchi * gam.values + chi * gam.derivative)
    v[0], d[0] = np.nan, np.nan
    return RadialProfile(grid, v, d, "GammaTilde", gam.asymptotics)


# ---------------------------------------------------------------- generalized kernel

def _weighted_cumulative(func, r, anchor, rtol=1e-12):
    return qd.cumulative(func, r, anchor=anchor, rtol=rtol)


def _from_zero(func, r, rtol=1e-12):
    """int_0^r func at the nodes r (0 is prepended when absent)."""
    rr = r if r[0] == 0 else np.concatenate([[0.0], r])
    cum = qd.cumulative(func, rr, anchor=0.0, rtol=rtol)
    return cum if r[0] == 0 else cum[1:]


def _to_infinity(func, r, rtol=1e-12):
    """int_r^inf func at the nodes r, summed from the far end (no cancellation)."""
    r = np.asarray(r, dtype=float)
    parts = qd.panel_integrals(func, r, rtol=rtol)
    back = np.concatenate([np.cumsum(parts[::-1])[::-1], [0.0]])
    return back + qd.tail_integral(func, r[-1], rtol=rtol)


def _lw2_weight(N):
    return lambda s: lambda_w(N, s) ** 2 * s ** (N - 1)


def _lw_gamma_from_zero(N, r, rtol=1e-10):
    """int_0^r Lambda W Gamma s^(N-1) ds (integrand ~ c p s near 0)."""
    def f(s):
        return lambda_w(N, s) * gamma_values(N, s)[0] * s ** (N - 1)
    return _from_zero(f, r, rtol)


def upsilon_profile(grid: RadialGrid) -> RadialProfile:
    """Upsilon = -LW int_0^r LW Gamma s^5 - Gamma int_r^inf LW^2 s^5 (6d).

    Solves (-Delta+V) Upsilon = Lambda W.  nan at r=0.
    """
    N = 6
    pos, rp = _positive(grid)
    i1 = _lw_gamma_from_zero(N, rp)
    i2 = _to_infinity(_lw2_weight(N), rp)
    g, dg = gamma_values(N, rp)
    lw, dlw = lambda_w(N, rp), lambda_w_deriv(N, rp)
    v = np.full(grid.nodes.shape, np.nan)
    d = np.full(grid.nodes.shape, np.nan)
    v[pos] = -lw * i1 - g * i2
    d[pos] = -dlw * i1 - dg * i2
    c0 = -gamma_coefficient_at_zero(N) * lambda_w_norm2(N)
    return RadialProfile(grid, v, d, "Upsilon", (Asymptote("zero", -4.0, c0),))


@dataclass(frozen=True)
class TProfiles:
    t_inf_1: RadialProfile
    t0_1: RadialProfile
    t0_0_tilde: RadialProfile
    e00: float
    e00_fit: float


def t_profiles_8d(grid: RadialGrid, check_fit=True) -> TProfiles:
    """Generalized kernel in 8d: (-Delta+V)T^inf_1 = -Lambda W, (-Delta+V)T^0_1 = -Gamma.

    T^inf_1 = Gamma int_r^inf LW^2 s^7 + LW int_0^r Gamma LW s^7,
    T^0_1   = -Gamma int_0^r LW Gamma s^7 + LW int_1^r Gamma^2 s^7,
    T~^0_0  = Gamma - e T^inf_1 with e = 1 / int_0^inf LW^2 s^7, which
    cancels the r^-6 singularity (e is also recovered from fitted coefficients).
    """
    N = 8
    pos, rp = _positive(grid)
    g, dg = gamma_values(N, rp)
    lw, dlw = lambda_w(N, rp), lambda_w_deriv(N, rp)
    K = _lw_gamma_from_zero(N, rp)
    P = _to_infinity(_lw2_weight(N), rp)
    M = _from_zero(_lw2_weight(N), rp)
    nodes1 = np.unique(np.concatenate([rp, [1.0]]))
    Qall = _weighted_cumulative(lambda s: gamma_values(N, s)[0] ** 2 * s**7, nodes1, 1.0,
                                rtol=1e-10)
    Q = Qall[np.searchsorted(nodes1, rp)]
    e = 1.0 / lambda_w_norm2(N)

    def full(x):
        out = np.full(grid.nodes.shape, np.nan)
        out[pos] = x
        return out

    c = gamma_coefficient_at_zero(N)
    tinf1 = RadialProfile(grid, full(lw * K + g * P), full(dlw * K + dg * P), "TInf1",
                          (Asymptote("zero", -6.0, c * lambda_w_norm2(N)),))
    t01 = RadialProfile(grid, full(-g * K + lw * Q), full(-dg * K + dlw * Q), "T01")
    tt = RadialProfile(grid, full(e * (g * M - lw * K)), full(e * (dg * M - dlw * K)),
                       "T00tilde")
    e_fit = e
    if check_fit:
        r_lo = rp[0]
        win = (r_lo, 16 * r_lo)
        fg = asymptotic_fit(gamma_profile(N, grid), "zero", win)
        ft = asymptotic_fit(tinf1, "zero", win)
        for fit in (fg, ft):
            if abs(fit.exponent + 6.0) > 0.05:
                raise NormalizationError(f"r^-6 fit rejected: exponent {fit.exponent:.4f}")
        e_fit = fg.coefficient / ft.coefficient
    return TProfiles(tinf1, t01, tt, e, e_fit)


# ---------------------------------------------------------------- elliptic solver

def _sampled_tail_integral(r, v, d):
    """int_r^inf u(s) ds for sampled u: Hermite cells plus a fitted power tail."""
    si = qd.SampledIntegral(r, v, d, lambda x, u, du: u)
    c, k = qd.power_tail(r, v)
    tail = qd.tail_of_power(c, k, r[-1]) if c != 0 else 0.0
    return si.total + tail - si.cum


def variation_of_parameters_solve(f: RadialProfile | None, g: RadialProfile | None,
                                  R: float = 0.0) -> RadialProfile:
    """Particular solution of -Delta u + V u = f + d_r g on r > R (6d).

    u = LW int_1^r gt d_s(Gamma s^5) + Gamma int_r^inf gt d_s(LW s^5) with
    gt = g - int_r^inf f; the homogeneous Lambda W coefficient is left at 0.
    Values on r < R (and at r=0) are nan.
    """
    prof = f if f is not None else g
    if prof is None:
        raise ValueError("need f or g")
    grid = prof.grid
    if grid.dimension != 6:
        raise UnsupportedDimensionError("the elliptic solver is 6d")
    r = grid.nodes
    zero = np.zeros_like(r)
    fv, fd = (f.values, f.derivative) if f is not None else (zero, zero)
    gv, gd = (g.values, g.derivative) if g is not None else (zero, zero)
    sel = r >= R
    rs = r[sel]
    ft = -_sampled_tail_integral(rs, fv[sel], fd[sel])
    gt = gv[sel] + ft
    gtd = gd[sel] + fv[sel]

    pos = rs > 0
    gam = np.full(rs.shape, np.nan)
    dgam = np.full(rs.shape, np.nan)
    gam[pos], dgam[pos] = gamma_values(6, rs[pos])
    lw, dlw = lambda_w(6, rs), lambda_w_deriv(6, rs)
    with np.errstate(invalid="ignore"):
        k1 = gt * (dgam * rs**5 + 5 * gam * rs**4)
    k1[~pos] = gt[~pos] * gamma_coefficient_at_zero(6)
    k2 = gt * (dlw * rs**5 + 5 * lw * rs**4)

    # int_1^r k1: cumulative Simpson from the first node, shifted to anchor 1
    A = cumulative_simpson(k1, x=rs, initial=0.0)
    if rs[0] <= 1.0 <= rs[-1]:
        j = np.searchsorted(rs, 1.0)
        a1 = A[j] if rs[j] == 1.0 else np.interp(1.0, rs, A)
        A = A - a1
    cum2 = cumulative_simpson(k2, x=rs, initial=0.0)
    c2, p2 = qd.power_tail(rs, k2)
    if c2 != 0 and p2 >= -1:
        raise TailDivergenceError("gt decays too slowly for the improper integral")
    B = cum2[-1] + qd.tail_of_power(c2, p2, rs[-1]) - cum2

    u = np.full(r.shape, np.nan)
    du = np.full(r.shape, np.nan)
    with np.errstate(invalid="ignore"):
        u[sel] = lw * A + gam * B
        du[sel] = dlw * A + dgam * B - gt
    u[r == 0] = np.nan
    du[r == 0] = np.nan
    return RadialProfile(grid, u, du, "Custom")


# ---------------------------------------------------------------- scaling, A-operators

def rescale(f: RadialProfile, lam: float, flavor: str = "H1") -> RadialProfile:
    """f_(lam) = lam^(-(N-2)/2) f(r/lam) (H1) or f_[lam] = lam^(-N/2) f(r/lam) (L2).

    Exact: the grid itself is stretched by lam.
    """
    if lam <= 0:
        raise ValueError("scale must be positive")
    N = f.dimension
    k = (N - 2) / 2.0 if flavor.upper() == "H1" else N / 2.0
    grid = f.grid.scaled(lam)
    return RadialProfile(grid, lam**-k * f.values, lam ** (-k - 1) * f.derivative,
                         f.kind if lam == 1 else "Custom")


def rescale_function(f, lam, N, flavor="H1"):
    k = (N - 2) / 2.0 if flavor.upper() == "H1" else N / 2.0
    return lambda r: lam**-k * f(np.asarray(r) / lam)


def apply_A(f: RadialProfile) -> RadialProfile:
    """(A f)(r) = int_r^inf rho f(rho) d rho; maps N-dimensional to (N-2)-dimensional."""
    r = f.r
    si = qd.SampledIntegral(r, f.values, f.derivative, lambda x, u, du: x * u)
    c, k = qd.power_tail(r, r * f.values)
    if c != 0 and k >= -1:
        raise TailDivergenceError("A needs decay faster than r^-2")
    tail = qd.tail_of_power(c, k, r[-1])
    vals = si.total + tail - si.cum
    der = -r * f.values
    dim = f.dimension - 2 if f.dimension - 2 in (3, 6, 8) else 6
    grid = RadialGrid(dim, r, f.grid.spacing, f.grid.h, f.grid.q)
    return RadialProfile(grid, vals, der, "Custom")


def apply_A_inverse(g: RadialProfile, dimension=None) -> RadialProfile:
    """(A^-1 g)(r) = -g'(r)/r, with the r->0 limit -g''(0)."""
    r = g.r
    d2 = np.gradient(g.derivative, r, edge_order=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = -g.derivative / r
        der = -d2 / r + g.derivative / r**2
    vals[0] = -d2[0]
    der[0] = 0.0
    dim = dimension or (g.dimension + 2 if g.dimension + 2 in (3, 6, 8) else 8)
    grid = RadialGrid(dim, r, g.grid.spacing, g.grid.h, g.grid.q)
    return RadialProfile(grid, vals, der, "Custom")


# ---------------------------------------------------------------- asymptotics

@dataclass(frozen=True)
class FitResult:
    exponent: float
    coefficient: float
    residual: float
    n_points: int


def _loglog_interpolant(f):
    """Piecewise linear interpolation of log|f| in log r (exact for power laws).

    Cubic interpolation is poor on coarse grids next to an r^-k singularity;
    a cell whose end values differ in sign yields 0, which the fit rejects.
    """
    ok = (f.r > 0) & np.isfinite(f.values)
    r, v = f.r[ok], f.values[ok]

    def fn(x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(r, x, side="right") - 1, 0, r.size - 2)
        a, b = v[i], v[i + 1]
        same = (np.sign(a) == np.sign(b)) & (a != 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.log(x / r[i]) / np.log(r[i + 1] / r[i])
            mag = np.exp((1 - t) * np.log(np.abs(a)) + t * np.log(np.abs(b)))
        return np.where(same, np.sign(a) * mag, 0.0)
    return fn


def asymptotic_fit(f, end: str, window=None, per_octave=8) -> FitResult:
    """Least-squares fit of log|f| against log r at the points 2^(j/8) in ``window``.

    ``f`` is a RadialProfile or a callable.  The window must hold at least 8
    such points.  A sign change inside the window raises SignChangeError.
    """
    if isinstance(f, RadialProfile):
        rpos = f.r[f.r > 0]
        lo_default, hi_default = rpos[0], rpos[-1]
        fn = _loglog_interpolant(f)
    else:
        fn = f
        lo_default, hi_default = 1e-3, 1e3
    if window is None:
        window = (lo_default, 8 * lo_default) if end == "zero" else (hi_default / 8, hi_default)
    lo, hi = window
    j = np.arange(np.ceil(per_octave * np.log2(lo) - 1e-9),
                  np.floor(per_octave * np.log2(hi) + 1e-9) + 1)
    pts = 2.0 ** (j / per_octave)
    if pts.size < 8:
        raise ValueError(f"window {window} holds {pts.size} < 8 fit points")
    vals = np.asarray(fn(pts), dtype=float)
    if np.any(vals == 0) or np.any(np.sign(vals) != np.sign(vals[0])):
        raise SignChangeError(f"profile changes sign inside {window}")
    x, y = np.log(pts), np.log(np.abs(vals))
    A = np.vstack([x, np.ones_like(x)]).T
    sol, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ sol
    coef = float(np.sign(vals[0]) * np.exp(sol[1]))
    return FitResult(float(sol[0]), coef, float(np.sqrt(np.mean(res**2))), pts.size)


# ---------------------------------------------------------------- discrete operators

def radial_laplacian_fd(r, u, N):
    """Three-point radial Laplacian u'' + (N-1)/r u'; endpoints use even symmetry / nan."""
    r = np.asarray(r, dtype=float)
    u = np.asarray(u, dtype=float)
    out = np.full(u.shape, np.nan)
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    up, uc, um = u[2:], u[1:-1], u[:-2]
    d2 = 2 * ((up - uc) / hp - (uc - um) / hm) / (hp + hm)
    d1 = (hm**2 * up - hp**2 * um + (hp**2 - hm**2) * uc) / (hp * hm * (hp + hm))
    out[1:-1] = d2 + (N - 1) / r[1:-1] * d1
    if r[0] == 0:
        out[0] = 2 * N * (u[1] - u[0]) / r[1] ** 2
    return out


def schrodinger_residual(profile: RadialProfile, rhs=None, V=None):
    """(-Delta_h + V) u - rhs on the profile grid (nan where undefined)."""
    N = profile.dimension
    r = profile.r
    Vv = potential(N, r) if V is None else V
    res = -radial_laplacian_fd(r, profile.values, N) + Vv * profile.values
    if rhs is not None:
        res = res - rhs
    return res
