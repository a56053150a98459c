"""Orthogonal projections onto complements of finite spans of profiles."""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import profiles as P
from .cutoffs import cutoff
from .errors import DegenerateBasisError
from .grid import RadialGrid, RadialProfile
from .norms import _weighted_inner

KINDS = ("L2", "H1dot")


@dataclass(frozen=True)
class ProjectorSpec:
    """Projector onto the orthogonal complement of span(basis).

    ``inner_product`` is "L2" or "H1dot", restricted to r >= R when R > 0
    (integration starts at the first node >= R).
    """
    inner_product: str
    basis: tuple
    labels: tuple
    gram: np.ndarray
    gram_condition: float
    R: float = 0.0
    dimension: int = 6

    @property
    def grid(self):
        return self.basis[0].grid

    def describe(self):
        ip = self.inner_product + (f"_exterior({self.R:g})" if self.R > 0 else "")
        return {"inner_product": ip, "basis": list(self.labels), "dimension": self.dimension,
                "gram_condition": self.gram_condition}

    def inner(self, f, g):
        G = _weighted_inner([f, g], self.R, derivative=(self.inner_product == "H1dot"))
        return float(G[0, 1])

    def norm(self, f):
        G = _weighted_inner([f], self.R, derivative=(self.inner_product == "H1dot"))
        return float(np.sqrt(max(G[0, 0], 0.0)))

    def coefficients(self, f):
        allp = [f] + list(self.basis)
        G = _weighted_inner(allp, self.R, derivative=(self.inner_product == "H1dot"))
        return _spd_solve(self.gram, G[1:, 0])


def _spd_solve(A, b):
    """Jacobi-scaled Cholesky solve with one step of iterative refinement."""
    d = np.sqrt(np.diag(A))
    As = A / np.outer(d, d)
    fac = cho_factor(As)
    y = cho_solve(fac, b / d)
    y += cho_solve(fac, b / d - As @ y)
    return y / d


def _assemble(inner_product, basis, labels, R, N):
    G = _weighted_inner(list(basis), R, derivative=(inner_product == "H1dot"))
    G = 0.5 * (G + G.T)
    # condition of the unit-diagonal Gram matrix: measures near dependence
    # rather than the (irrelevant) spread of the basis norms
    dg = np.sqrt(np.diag(G))
    if np.any(~(dg > 0)):
        raise DegenerateBasisError(f"basis {labels} contains a zero element")
    ev = np.linalg.eigvalsh(G / np.outer(dg, dg))
    if ev[0] <= 0:
        raise DegenerateBasisError(f"Gram matrix of {labels} is not positive definite")
    cond = float(ev[-1] / ev[0])
    if cond > 1e10:
        raise DegenerateBasisError(f"Gram condition {cond:.3g} of {labels} exceeds 1e10")
    G.setflags(write=False)
    return ProjectorSpec(inner_product, tuple(basis), tuple(labels), G, cond, float(R), N)


def rescaled_lambda_w(grid: RadialGrid, lam, flavor="H1"):
    """(Lambda W)_(lam) (H1) or (Lambda W)_[lam] (L2), sampled exactly on ``grid``."""
    N = grid.dimension
    k = (N - 2) / 2.0 if flavor == "H1" else N / 2.0
    r = grid.nodes
    v = lam**-k * P.lambda_w(N, r / lam)
    d = lam ** (-k - 1) * P.lambda_w_deriv(N, r / lam)
    return RadialProfile(grid, v, d, "LambdaW" if N == 6 else "TInf0")


def rescaled_potential(N, r, lam):
    """V_(lam)(r) = lam^-2 V(r/lam)."""
    return lam**-2.0 * P.potential(N, np.asarray(r) / lam)


_T_CACHE: dict = {}


def _t_profiles(grid):
    key = (grid.describe(), grid.nodes.size, float(grid.nodes[-1]))
    if key not in _T_CACHE:
        if len(_T_CACHE) > 8:
            _T_CACHE.clear()
        _T_CACHE[key] = P.t_profiles_8d(grid, check_fit=False)
    return _T_CACHE[key]


def chi0_t01(grid):
    """chi^0 T^0_1 with chi^0 = 1 on r <= 10 and 0 on r >= 11 (C^2 quintic)."""
    t01 = _t_profiles(grid).t0_1
    chi, dchi, _ = cutoff(grid.nodes, 10.0, 11.0)
    with np.errstate(invalid="ignore"):
        v = np.where(chi == 0, 0.0, chi * t01.values)
        d = np.where(chi == 0, 0.0, dchi * t01.values + chi * t01.derivative)
    return RadialProfile(grid, v, d, "Custom")


def make_projector(kind, N, grid: RadialGrid, R=0.0, lam=None) -> ProjectorSpec:
    """Assemble the projector for ``kind`` in {"L2", "H1dot"}.

    6d:  L2 uses span(Lambda W), or span(Lambda W, Gamma~) when 0 < R < 1;
         H1dot uses span(Lambda W).
         With ``lam`` (decreasing scales), span of the rescaled Lambda W
         (L2 flavour [lam] for L2, H1 flavour (lam) for H1dot).
    8d:  L2 uses span(T_inf_0); H1dot uses span(T_inf_0) for R = 0,
         span(T_inf_0, T_inf_1) for R >= 1 and adds chi^0 T^0_1 for 0 < R < 1.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown projector kind {kind!r}")
    if R < 0:
        raise ValueError("R must be >= 0")
    if grid.dimension != N:
        raise ValueError("grid dimension does not match N")
    if lam is not None:
        scales = np.asarray(getattr(lam, "scales", lam), dtype=float)
        if np.any(scales <= 0) or np.any(np.diff(scales) >= 0):
            raise ValueError("scales must be positive and strictly decreasing")
        flavor = "L2" if kind == "L2" else "H1"
        basis = [rescaled_lambda_w(grid, s, flavor) for s in scales]
        labels = [f"LambdaW_{'[' if flavor == 'L2' else '('}{s:g}{']' if flavor == 'L2' else ')'}"
                  for s in scales]
        return _assemble(kind, basis, labels, R, N)
    lw = P.lambda_w_profile(N, grid)
    if N == 6:
        if kind == "L2" and 0 < R < 1:
            return _assemble(kind, [lw, P.truncated_gamma(grid)], ["LambdaW", "GammaTilde"], R, N)
        return _assemble(kind, [lw], ["LambdaW"], R, N)
    if N == 8:
        if kind == "L2" or R == 0:
            return _assemble(kind, [lw], ["TInf0"], R, N)
        tinf1 = _t_profiles(grid).t_inf_1
        if R >= 1:
            return _assemble(kind, [lw, tinf1], ["TInf0", "TInf1"], R, N)
        return _assemble(kind, [lw, tinf1, chi0_t01(grid)], ["TInf0", "TInf1", "chi0T01"], R, N)
    raise ValueError(f"no projectors in dimension {N}")


def project_out(p: ProjectorSpec, f: RadialProfile) -> RadialProfile:
    """f - sum_i c_i b_i with c solving the Gram system."""
    c = p.coefficients(f)
    v = np.array(f.values, dtype=float)
    d = np.array(f.derivative, dtype=float)
    for ci, b in zip(c, p.basis):
        with np.errstate(invalid="ignore"):
            v = v - ci * b.values
            d = d - ci * b.derivative
    return RadialProfile(f.grid, v, d, "Custom")
