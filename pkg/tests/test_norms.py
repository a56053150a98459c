import json

import numpy as np
import pytest
from scipy.integrate import quad

from coel import profiles as P
from coel.errors import DegenerateBasisError, GridSpanError
from coel.grid import RadialGrid, profile_from_function
from coel.norms import (ConeSpec, NormReport, NormSpec, SampledField, cone_spacetime_norm,
                        exterior_energy, exterior_sum, gradient_profile, span_distance,
                        z_local_norm, z_multi_norm, z_norm, _weighted_inner)
from coel.solver import CauchyData, Potential, SolverConfig, evolve

SQRT_LOG2 = 0.832554611157697756  # mpmath


def bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = np.abs(x) < 1
    out[m] = np.exp(-1.0 / (1.0 - x[m] ** 2))
    return out


@pytest.fixture(scope="module")
def grid6():
    return RadialGrid.uniform(6, 40.0, 0.01)


def test_z_norm_of_zero(grid6):
    z = profile_from_function(grid6, lambda r: np.zeros_like(r))
    assert z_norm(z, -3.0).value == 0.0


def test_z_norm_indicator_example():
    f = lambda r: np.where((r >= 1) & (r <= 2), r ** -3.0, 0.0)
    rep = z_norm(f, -3.0, N=6, support=(1.0, 2.0))
    assert rep.value == pytest.approx(SQRT_LOG2, rel=1e-8)
    assert rep.sup_attained_at == pytest.approx(1.0)


def test_z_norm_callable_needs_support():
    with pytest.raises(ValueError):
        z_norm(lambda r: r, -3.0)


def test_l2_embeds_in_z_minus3(grid6):
    for k in range(5):
        c = 0.5 + 3 * k
        f = profile_from_function(grid6, lambda r: bump((r - c) / (0.3 + 0.2 * k)))
        l2 = np.sqrt(_weighted_inner([f], 0.0)[0, 0])
        assert z_norm(f, -3.0, on_boundary="flag").value <= l2 * (1 + 1e-12)


def test_homogeneity_and_triangle(grid6):
    f = profile_from_function(grid6, lambda r: bump(r - 2.0))
    g = profile_from_function(grid6, lambda r: bump((r - 5.0) / 2.0))
    zf = z_norm(f, -3.0).value
    assert z_norm(f.scale(-2.5), -3.0).value == pytest.approx(2.5 * zf, rel=1e-12)
    assert z_norm(f + g, -3.0).value <= zf + z_norm(g, -3.0).value + 1e-14


def test_unlogged_variant_dominates(grid6):
    f = profile_from_function(grid6, lambda r: bump((r - 6.0) / 2.0))
    assert z_norm(f, -3.0, variant="unlogged").value >= z_norm(f, -3.0).value


def test_sup_at_grid_edge_raises(grid6):
    # a profile that does not vanish at r_max has its sup pinned to the scan edge
    f = profile_from_function(grid6, lambda r: r ** 2)
    with pytest.raises(GridSpanError):
        z_norm(f, -3.0)
    assert z_norm(f, -3.0, on_boundary="flag").boundary


def test_multi_norm_single_scale_matches(grid6):
    f = profile_from_function(grid6, lambda r: bump((r - 3.0) / 1.5))
    a = z_norm(f, -3.0).value
    b = z_multi_norm(f, -3.0, (1.0,)).value
    assert b == pytest.approx(a, rel=1e-12)


def test_multi_norm_scaling_identity():
    lam = 4.0
    grid = RadialGrid.uniform(6, 80.0, 0.01)
    f = profile_from_function(grid, lambda r: bump((r - 8.0) / 5.0))
    g = P.rescale(f, 1.0 / lam, "L2")
    assert z_multi_norm(f, -3.0, (lam,)).value == pytest.approx(z_norm(g, -3.0).value, rel=1e-8)


def test_multi_norm_monotone_in_scales(grid6):
    f = profile_from_function(grid6, lambda r: bump((r - 4.0) / 3.0))
    full = z_multi_norm(f, -3.0, (1.0, 0.25)).value
    for lam in (1.0, 0.25):
        assert z_multi_norm(f, -3.0, (lam,)).value <= full * (1 + 1e-12)


def test_multi_norm_rejects_bad_scales(grid6):
    f = profile_from_function(grid6, lambda r: bump(r - 2.0))
    with pytest.raises(ValueError):
        z_multi_norm(f, -3.0, (0.5, 1.0))


def test_local_norm_ignores_interior(grid6):
    f = profile_from_function(grid6, lambda r: bump((r - 1.0) / 0.5))
    assert z_local_norm(f, -3.0, 2.0).value == 0.0
    assert z_local_norm(f, -3.0, 0.25).value > 0.0


def test_span_distance_member():
    grid = RadialGrid.uniform(6, 60.0, 0.01)
    lw = P.lambda_w_profile(6, grid)
    d = span_distance(lw, [lw], NormSpec("z_local", -2.0, 1.0))
    assert d.value < 1e-8 * z_local_norm(lw, -2.0, 1.0, on_boundary="flag").value


def test_span_distance_empty_basis(grid6):
    f = profile_from_function(grid6, lambda r: bump((r - 3.0) / 2.0))
    d = span_distance(f, [], NormSpec("z_local", -2.0, 0.5))
    assert d.value == pytest.approx(z_local_norm(f, -2.0, 0.5).value, rel=1e-12)
    d2 = span_distance(f, [], NormSpec("L2"))
    assert d2.value == pytest.approx(np.sqrt(_weighted_inner([f], 0.0)[0, 0]), rel=1e-12)


def test_span_distance_upper_bound():
    grid = RadialGrid.uniform(6, 60.0, 0.01)
    U = P.upsilon_profile(grid)
    lw = P.lambda_w_profile(6, grid)
    b = profile_from_function(grid, lambda r: 0.1 * bump((r - 3.0) / 1.0))
    spec = NormSpec("z_local", -2.0, 0.5)
    d = span_distance(U + b, [lw, U], spec)
    assert d.value <= z_local_norm(b, -2.0, 0.5).value * (1 + 1e-6)


def test_span_distance_l2_projection_residual(grid6):
    lw = P.lambda_w_profile(6, grid6)
    f = profile_from_function(grid6, lambda r: bump((r - 3.0) / 2.0))
    d = span_distance(f, [lw], NormSpec("L2"))
    c = d.extra["coefficients"][0]
    res = f - lw.scale(c)
    assert abs(_weighted_inner([res, lw], 0.0)[0, 1]) < 1e-10 * P.lambda_w_norm2(6)
    assert d.value == pytest.approx(np.sqrt(_weighted_inner([res], 0.0)[0, 0]), rel=1e-8)


def test_span_distance_degenerate_basis(grid6):
    lw = P.lambda_w_profile(6, grid6)
    with pytest.raises(DegenerateBasisError):
        span_distance(lw, [lw, lw.scale(1.0 + 1e-12)], NormSpec("L2"))


def test_norm_report_json_and_validation():
    rep = NormReport("x", 1.5, 2.0, extra={"a": np.float64(3.0)})
    d = json.loads(rep.to_json())
    assert d["value"] == 1.5 and d["R_star"] == 2.0 and d["a"] == 3.0
    with pytest.raises(ValueError):
        NormReport("bad", float("nan"))


def test_gradient_profile(grid6):
    f = profile_from_function(grid6, lambda r: np.exp(-r**2), lambda r: -2 * r * np.exp(-r**2))
    g = gradient_profile(f)
    assert np.allclose(g.values, -2 * grid6.nodes * np.exp(-grid6.nodes**2))


def test_exterior_energy_of_zero():
    cfg = SolverConfig(h=0.05, r_max=20.0)
    grid = cfg.grid(6)
    z = profile_from_function(grid, lambda r: np.zeros_like(r))
    tr = evolve(6, None, CauchyData(z, z), None, 5.0, cfg)
    rep = exterior_energy(tr, ConeSpec(0.0, 0.0, "forward"))
    assert rep.value == 0.0 and rep.converged


def test_exterior_energy_nonincreasing_in_R():
    cfg = SolverConfig(h=0.02, r_max=30.0)
    grid = cfg.grid(6)
    u0 = profile_from_function(grid, lambda r: bump((r - 3.0) / 1.5))
    tr = evolve(6, None, CauchyData(u0, u0.scale(0.0)), None, 15.0, cfg)
    vals = [exterior_energy(tr, ConeSpec(0.0, R, "forward")).value for R in (0.0, 1.0, 2.0, 3.0, 5.0)]
    assert all(b <= a + 1e-14 for a, b in zip(vals, vals[1:]))
    # support ends at 4.5: only grid dispersion reaches beyond R = 5
    assert vals[-1] < 1e-10 * vals[0]


def test_exterior_energy_needs_direction():
    cfg = SolverConfig(h=0.05, r_max=20.0)
    grid = cfg.grid(6)
    u0 = profile_from_function(grid, lambda r: bump(r - 3.0))
    tr = evolve(6, None, CauchyData(u0, u0.scale(0.0)), None, 5.0, cfg)
    with pytest.raises(ValueError):
        exterior_energy(tr, ConeSpec(0.0, 0.0, "backward"))


def test_exterior_sum_full_equals_energy():
    cfg = SolverConfig(h=0.05, r_max=20.0)
    grid = cfg.grid(6)
    u0 = profile_from_function(grid, lambda r: bump(r - 3.0))
    u1 = profile_from_function(grid, lambda r: bump(r - 5.0))
    tr = evolve(6, Potential.soliton(), CauchyData(u0, u1), None, 2.0, cfg)
    s = tr.snapshots[0]
    V = Potential.soliton().values(6, grid.nodes)
    assert tr.energy(s) == pytest.approx(exterior_sum(grid, s.u, s.ut, 0.0, V)[0])


def test_cone_norm_zero_field():
    t = np.linspace(0, 2, 11)
    r = np.linspace(0, 5, 51)
    F = SampledField(t, r, np.zeros((t.size, r.size)))
    assert cone_spacetime_norm(F, ConeSpec(0.0, 1.0, "forward"), 1, 2) == 0.0
    assert cone_spacetime_norm(lambda t, r: 0.0 * r, ConeSpec(0.0, 1.0, "both"), 2, 4,
                               t_range=(-1, 1)) == 0.0


def test_cone_norm_constant_field_against_quad():
    cone = ConeSpec(0.0, 1.0, "forward", outer=2.0)
    val = cone_spacetime_norm(lambda t, r: np.ones_like(r), cone, 1, 2, t_range=(0.0, 1.0))
    ref = quad(lambda t: np.sqrt(((2 + t) ** 6 - (1 + t) ** 6) / 6.0), 0, 1, epsabs=0, epsrel=1e-13)[0]
    assert val == pytest.approx(ref, rel=1e-8)
    # the same region on a tensor grid converges to the same number
    t = np.linspace(0, 1, 401)
    r = np.linspace(0, 3, 3001)
    F = SampledField(t, r, np.ones((t.size, r.size)))
    assert cone_spacetime_norm(F, cone, 1, 2) == pytest.approx(ref, rel=2e-3)


def test_cone_norm_bad_exponents():
    with pytest.raises(ValueError):
        cone_spacetime_norm(lambda t, r: r, ConeSpec(), 3, 3)


def test_cone_spec_validation():
    with pytest.raises(ValueError):
        ConeSpec(R=-1.0)
    lo, hi = ConeSpec(1.0, 2.0, shape="max").bounds(4.0)
    assert lo == 3.0 and hi == np.inf
