"""Vectorized adaptive Gauss-Legendre panel quadrature.

Every panel is integrated with an n-point rule on the whole panel and on its
two halves; panels whose two estimates disagree are bisected.  All panels of
one refinement level are processed in a single numpy call, so integrands must
accept arrays.
"""
from functools import lru_cache

import numpy as np

from .errors import QuadratureError, TailDivergenceError


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _rule(f, a, b, n):
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    pts = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(f(pts), dtype=float)
    return half * (vals @ w), np.abs(half) * (np.abs(vals) @ w)


def panel_integrals(f, edges, rtol=1e-12, atol=0.0, n=16, max_depth=48):
    """Integrals of ``f`` over each panel [edges[i], edges[i+1]].

    Returns an array of length len(edges)-1.  Raises QuadratureError when a
    panel cannot be resolved within ``max_depth`` bisections.
    """
    edges = np.asarray(edges, dtype=float)
    npan = edges.size - 1
    out = np.zeros(npan)
    if npan <= 0:
        return out
    a = edges[:-1].copy()
    b = edges[1:].copy()
    owner = np.arange(npan)
    # local absolute floor: a panel's share of atol
    span = max(edges[-1] - edges[0], np.finfo(float).tiny)
    for _ in range(max_depth):
        m = 0.5 * (a + b)
        whole, _ = _rule(f, a, b, n)
        left, aleft = _rule(f, a, m, n)
        right, aright = _rule(f, m, b, n)
        halves = left + right
        err = np.abs(whole - halves)
        tol = np.maximum(rtol * np.abs(halves), atol * (b - a) / span)
        # round-off floor (relative to int |f|) so panels never split forever
        tol = np.maximum(tol, 256 * np.finfo(float).eps * (aleft + aright))
        # values near the subnormal range carry no relative precision
        tol = np.maximum(tol, 1e-280)
        ok = ~(err > tol)
        np.add.at(out, owner[ok], halves[ok])
        if ok.all():
            return out
        bad = ~ok
        if bad.sum() > 200_000:
            break
        a, m_, b, owner = a[bad], m[bad], b[bad], owner[bad]
        a = np.concatenate([a, m_])
        b = np.concatenate([m_, b])
        owner = np.concatenate([owner, owner])
    raise QuadratureError(
        f"adaptive quadrature did not converge on {owner.size} sub-panels "
        f"near r={a.min():.6g}..{b.max():.6g}")


def integrate(f, a, b, rtol=1e-12, atol=0.0, breakpoints=(), n=16, panels=8):
    """Definite integral of a vectorized callable; ``b`` may be ``np.inf``."""
    if b == np.inf:
        return tail_integral(f, a, rtol=rtol, atol=atol, n=n)
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    edges = np.linspace(a, b, panels + 1)
    bp = [p for p in breakpoints if a < p < b]
    if bp:
        edges = np.unique(np.concatenate([edges, bp]))
    return sign * float(panel_integrals(f, edges, rtol, atol, n).sum())


def tail_integral(f, a, rtol=1e-12, atol=0.0, n=16):
    """Integral of ``f`` over [a, inf) through the substitution s = a/tau.

    Needs a > 0.  The mapped integrand f(a/tau) a/tau^2 is regular at tau=0
    whenever f decays faster than s^-2; slower algebraic decay down to s^-1
    is handled by geometric panels accumulating at tau=0.
    """
    if a <= 0:
        raise ValueError("tail_integral needs a positive lower limit")

    def g(tau):
        s = a / tau
        return np.asarray(f(s), dtype=float) * a / tau**2

    edges = np.concatenate([[0.0], 2.0 ** -np.arange(60, -1, -1, dtype=float)])
    # a rough first pass sets an absolute floor, so that far panels whose
    # values sit near underflow are not refined forever
    rough, rabs = _rule(g, edges[:-1], edges[1:], n)
    floor = 1e-3 * rtol * float(np.sum(rabs))
    parts = panel_integrals(g, edges, rtol, max(atol, floor), n)
    # the first panels probe s ~ a*2^60; a non-negligible share signals divergence
    head = np.abs(parts[:4]).sum()
    total = parts.sum()
    if not np.isfinite(total) or head > 1e-6 * max(abs(total), 1e-300) + atol:
        raise TailDivergenceError(f"tail integral from {a:g} does not converge")
    return float(total)


def cumulative(f, nodes, anchor=None, breakpoints=(), rtol=1e-12, atol=0.0, n=16):
    """F(nodes) with F(x) = int_anchor^x f.

    ``nodes`` must be increasing; ``anchor`` defaults to nodes[0] and may be
    any point inside [nodes[0], nodes[-1]].  Extra ``breakpoints`` become
    panel edges (use them for points where f is only piecewise smooth).
    """
    nodes = np.asarray(nodes, dtype=float)
    if anchor is None:
        anchor = nodes[0]
    if not nodes[0] <= anchor <= nodes[-1]:
        raise ValueError("anchor outside the node range")
    extra = [p for p in list(breakpoints) + [anchor] if nodes[0] < p < nodes[-1]]
    edges = np.unique(np.concatenate([nodes, np.asarray(extra, dtype=float)]))
    parts = panel_integrals(f, edges, rtol, atol, n)
    ia = np.searchsorted(edges, anchor)
    # accumulate outward from the anchor so that large far-away panels never
    # enter a difference
    cum = np.zeros(edges.size)
    cum[ia + 1:] = np.cumsum(parts[ia:])
    cum[:ia] = -np.cumsum(parts[:ia][::-1])[::-1]
    idx = np.searchsorted(edges, nodes)
    return cum[idx]


def power_tail(r, values, power_hint=None):
    """Fit c*r^k to the last octave of sampled data and return (c, k).

    Used to close improper integrals of sampled integrands beyond the grid.
    Returns (0, -inf) when the samples vanish identically there.
    """
    r = np.asarray(r, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = r >= 0.5 * r[-1]
    rr, vv = r[sel], v[sel]
    if np.all(vv == 0):
        return 0.0, -np.inf
    if power_hint is not None:
        k = float(power_hint)
    else:
        if np.any(vv == 0) or np.any(np.sign(vv) != np.sign(vv[-1])):
            return 0.0, -np.inf
        k = np.polyfit(np.log(rr), np.log(np.abs(vv)), 1)[0]
    c = vv[-1] / rr[-1] ** k
    return float(c), float(k)


def tail_of_power(c, k, a):
    """int_a^inf c s^k ds for k < -1."""
    if c == 0:
        return 0.0
    if k >= -1:
        raise TailDivergenceError(f"power tail s^{k:.3g} is not integrable")
    return -c * a ** (k + 1) / (k + 1)


def _hermite_points(r, v, d, x, i):
    h = r[i + 1] - r[i]
    s = (x - r[i]) / h
    v0, v1, d0, d1 = v[i], v[i + 1], d[i] * h, d[i + 1] * h
    s2, s3 = s * s, s * s * s
    val = ((2 * s3 - 3 * s2 + 1) * v0 + (s3 - 2 * s2 + s) * d0
           + (-2 * s3 + 3 * s2) * v1 + (s3 - s2) * d1)
    der = ((6 * s2 - 6 * s) * v0 + (3 * s2 - 4 * s + 1) * d0
           + (-6 * s2 + 6 * s) * v1 + (3 * s2 - 2 * s) * d1) / h
    return val, der


class SampledIntegral:
    """Cumulative integral of func(x, u, u') for a sampled (u, u').

    u is represented by its piecewise cubic Hermite interpolant; each cell is
    integrated with an ``n``-point Gauss-Legendre rule.  ``between(a, b)``
    accepts arbitrary (vectorized) limits inside the grid.
    """

    def __init__(self, r, v, d, func, n=8):
        self.r = np.asarray(r, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.d = np.asarray(d, dtype=float)
        self.func = func
        self.n = n
        i = np.arange(self.r.size - 1)
        parts = self._segment(i, self.r[:-1], self.r[1:])
        # profiles singular at the origin carry nan at r=0; drop that cell
        self.singular_origin = not np.isfinite(parts[0])
        if self.singular_origin:
            parts[0] = 0.0
        self.cum = np.concatenate([[0.0], np.cumsum(parts)])

    def _segment(self, i, a, b):
        x, w = gauss_legendre(self.n)
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        pts = mid[:, None] + half[:, None] * x[None, :]
        ii = np.broadcast_to(np.asarray(i)[:, None], pts.shape)
        val, der = _hermite_points(self.r, self.v, self.d, pts, ii)
        g = np.asarray(self.func(pts, val, der), dtype=float)
        g = np.where(half[:, None] == 0, 0.0, g)
        return half * (g @ w)

    def at(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        x = np.clip(x, self.r[0], self.r[-1])
        i = np.clip(np.searchsorted(self.r, x, side="right") - 1, 0, self.r.size - 2)
        return self.cum[i] + self._segment(i, self.r[i], x)

    def between(self, a, b):
        return self.at(b) - self.at(a)

    @property
    def total(self):
        return float(self.cum[-1])
