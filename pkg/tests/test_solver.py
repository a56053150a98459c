import json
import os

import numpy as np
import pytest

from coel import profiles as P
from coel.errors import CFLViolationError, DomainTooSmallError
from coel.grid import RadialGrid, RadialProfile, profile_from_function
from coel.norms import ConeSpec, exterior_energy
from coel.solver import (CauchyData, Potential, SolverConfig, check_cfl, convergence_study,
                         discrete_kernel, evolve, evolve_both, extend_exterior_data,
                         radiation_profile)


def bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = np.abs(x) < 1
    out[m] = np.exp(-1.0 / (1.0 - x[m] ** 2))
    return out


def _zero(grid):
    z = np.zeros(grid.nodes.size)
    return RadialProfile(grid, z, z.copy())


def _kernel_profile(cfg, N=6):
    grid = cfg.grid(N)
    k = discrete_kernel(N, cfg, Potential.soliton(), P.lambda_w(N, 0.0))
    return RadialProfile(grid, k, np.gradient(k, grid.nodes))


def test_zero_data_stays_zero():
    cfg = SolverConfig(h=0.05, r_max=20.0)
    z = _zero(cfg.grid(6))
    tr = evolve(6, Potential.soliton(), CauchyData(z, z), None, 5.0, cfg)
    assert all(not np.any(s.u) and not np.any(s.ut) for s in tr.snapshots)


def test_discrete_kernel_is_stationary():
    cfg = SolverConfig(h=0.02, r_max=30.0)
    k = _kernel_profile(cfg)
    tr = evolve(6, Potential.soliton(), CauchyData(k, k.scale(0.0)), None, 10.0, cfg)
    r = cfg.grid(6).nodes
    # the Dirichlet edge sends a dispersive precursor a little ahead of r_max - t
    m = r < cfg.r_max - 10.0 - 2.0
    s = tr.snapshots[-1]
    assert np.max(np.abs(s.u - k.values)[m]) < 1e-11
    assert np.max(np.abs(s.ut)[m]) < 1e-11


def test_discrete_kernel_gives_linear_growth():
    cfg = SolverConfig(h=0.02, r_max=30.0)
    k = _kernel_profile(cfg)
    T = 10.0
    tr = evolve(6, Potential.soliton(), CauchyData(k.scale(0.0), k), None, T, cfg)
    r = cfg.grid(6).nodes
    m = r < cfg.r_max - T - 2.0
    # round-off near the origin is amplified by the growing mode of -Delta + V
    tol = 1e-8 * np.max(np.abs(k.values))
    for s in tr.snapshots:
        assert np.max(np.abs(s.u - s.t * k.values)[m]) < tol
        assert np.max(np.abs(s.ut - k.values)[m]) < tol


def test_discrete_kernel_converges_to_lambda_w():
    errs = []
    for h in (0.04, 0.02, 0.01):
        cfg = SolverConfig(h=h, r_max=20.0)
        k = discrete_kernel(6, cfg, Potential.soliton(), 2.0)
        r = cfg.grid(6).nodes
        errs.append(np.max(np.abs(k - P.lambda_w(6, r))[r <= 15]))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2.0) < 0.3)


def test_stationary_regression_second_order():
    def problem(h):
        cfg = SolverConfig(h=h, r_max=30.0)
        k = _kernel_profile(cfg)
        tr = evolve(6, Potential.soliton(), CauchyData(k, k.scale(0.0)), None, 5.0, cfg)
        r = cfg.grid(6).nodes
        m = r < 30.0 - 5.0 - 2.0
        return {"drift": np.max(np.abs(tr.snapshots[-1].u - P.lambda_w(6, r))[m])}
    rep = convergence_study(problem, [0.04, 0.02, 0.01])
    assert rep["drift"]["observed"] == pytest.approx(2.0, abs=0.3)


def test_cfl_bounds():
    with pytest.raises(CFLViolationError):
        SolverConfig(h=0.1, r_max=10.0, cfl=1.2)
    with pytest.raises(CFLViolationError):
        SolverConfig(h=0.1, r_max=10.0, cfl=0.0)
    # the origin cell caps the stable Courant number below 1/sqrt(3) in 6d
    with pytest.raises(CFLViolationError):
        check_cfl(6, SolverConfig(h=0.05, r_max=10.0, cfl=0.6))
    check_cfl(6, SolverConfig(h=0.05, r_max=10.0, cfl=0.4))


def test_domain_too_small():
    cfg = SolverConfig(h=0.05, r_max=10.0)
    grid = cfg.grid(6)
    u0 = profile_from_function(grid, lambda r: bump(r - 3.0))
    with pytest.raises(DomainTooSmallError):
        evolve(6, None, CauchyData(u0, u0.scale(0.0)), None, 8.0, cfg)


def test_finite_speed_of_propagation():
    cfg = SolverConfig(h=0.02, r_max=30.0)
    grid = cfg.grid(6)
    u0 = profile_from_function(grid, lambda r: bump(r - 3.0))  # support [2, 4]
    T = 6.0
    tr = evolve(6, Potential.soliton(), CauchyData(u0, u0.scale(0.0)), None, T, cfg)
    s = tr.snapshots[-1]
    r = grid.nodes
    inside = np.max(np.abs(s.u))
    leak = np.max(np.abs(s.u[r > 4.0 + T + 0.5]))
    assert leak < 1e-8 * inside


def test_backward_equals_reversed_data():
    cfg = SolverConfig(h=0.04, r_max=20.0)
    grid = cfg.grid(6)
    u0 = profile_from_function(grid, lambda r: bump(r - 3.0))
    u1 = profile_from_function(grid, lambda r: 0.5 * bump((r - 4.0) / 0.7))
    d = CauchyData(u0, u1)
    b = evolve(6, Potential.soliton(), d, None, -4.0, cfg)
    f = evolve(6, Potential.soliton(), d.reversed(), None, 4.0, cfg)
    assert np.allclose(b.times, -f.times)
    for sb, sf in zip(b.snapshots, f.snapshots):
        assert np.array_equal(sb.u, sf.u)
        assert np.array_equal(sb.ut, -sf.ut)


def test_energy_conservation_second_order():
    def problem(h):
        cfg = SolverConfig(h=h, r_max=25.0)
        grid = cfg.grid(6)
        u0 = profile_from_function(grid, lambda r: bump((r - 5.0) / 2.0))
        tr = evolve(6, None, CauchyData(u0, u0.scale(0.0)), None, 8.0, cfg)
        E = [tr.energy(s) for s in tr.snapshots]
        return {"drift": (max(E) - min(E)) / E[0]}
    rep = convergence_study(problem, [0.04, 0.02, 0.01])
    assert rep["drift"]["errors"][-1] < 1e-3
    assert rep["drift"]["observed"] == pytest.approx(2.0, abs=0.3)


def test_three_dimensional_dalembert():
    # in 3d, r u(t, r) = (g(r + t) + g(r - t)) / 2 with g the odd extension of r u0
    phi = lambda r: np.exp(-4.0 * (r - 5.0) ** 2)
    g = lambda s: s * phi(np.abs(s))
    T = 3.0
    errs = []
    for h in (0.02, 0.01):
        cfg = SolverConfig(h=h, r_max=30.0, snapshot_times=(0.0, T))
        grid = RadialGrid.uniform(3, 30.0, h)
        u0 = profile_from_function(grid, phi)
        tr = evolve(3, None, CauchyData(u0, u0.scale(0.0)), None, T, cfg)
        s = tr.snapshots[-1]
        r = grid.nodes
        m = (r > 0.5) & (r < 20)
        exact = (g(r[m] + s.t) + g(r[m] - s.t)) / (2 * r[m])
        errs.append(np.max(np.abs(s.u[m] - exact)))
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)


def test_radiation_profile_of_zero():
    cfg = SolverConfig(h=0.05, r_max=20.0)
    z = _zero(cfg.grid(6))
    tr = evolve(6, None, CauchyData(z, z), None, 5.0, cfg)
    G = radiation_profile(tr)
    assert not np.any(G.G) and G.energy == 0.0


def test_radiation_identity_free_wave():
    cfg = SolverConfig(h=0.02, r_max=85.0, snapshot_times=(0.0, 20.0, 40.0, 60.0, 70.0, 80.0))
    grid = cfg.grid(6)
    u0 = profile_from_function(grid, lambda r: bump((r - 2.0) / 1.0))
    tr = evolve(6, None, CauchyData(u0, u0.scale(0.0)), None, 80.0, cfg)
    E = exterior_energy(tr, ConeSpec(0.0, 0.0, "forward")).value
    G = radiation_profile(tr)
    assert G.energy == pytest.approx(E, rel=0.03)


def test_extension_examples():
    grid = RadialGrid.uniform(6, 10.0, 0.01)
    R = 2.0
    c = profile_from_function(grid, lambda r: np.full_like(r, 1.7), lambda r: np.zeros_like(r))
    ext = extend_exterior_data(c, R)
    assert np.allclose(ext.values, 1.7)
    lin = profile_from_function(grid, lambda r: r, lambda r: np.ones_like(r))
    e2 = extend_exterior_data(lin, R)
    assert abs(e2.values[0]) < 1e-12
    # C^1 at R
    i = np.searchsorted(grid.nodes, R)
    assert e2(R - 1e-9) == pytest.approx(R, abs=1e-6)
    assert e2.deriv_at(R - 1e-6) == pytest.approx(1.0, abs=1e-4)
    assert np.array_equal(e2.values[i:], lin.values[i:])


def test_extension_domain_too_small():
    grid = RadialGrid.uniform(6, 5.0, 0.05)
    f = profile_from_function(grid, lambda r: r)
    with pytest.raises(DomainTooSmallError):
        extend_exterior_data(f, 2.0)
    with pytest.raises(ValueError):
        extend_exterior_data(f, 0.0)


def test_convergence_study_rejects_bad_ladder():
    with pytest.raises(ValueError):
        convergence_study(lambda h: {"e": h}, [0.1, 0.05])
    with pytest.raises(ValueError):
        convergence_study(lambda h: {"e": h}, [0.1, 0.05, 0.01])
    rep = convergence_study(lambda h: {"e": h**2}, [0.1, 0.05, 0.025])
    assert rep["e"]["observed"] == pytest.approx(2.0)


def test_export_manifest(tmp_path):
    cfg = SolverConfig(h=0.1, r_max=10.0)
    grid = cfg.grid(6)
    u0 = profile_from_function(grid, lambda r: bump(r - 2.0))
    tr = evolve(6, Potential.soliton(), CauchyData(u0, u0.scale(0.0)), None, 2.0, cfg)
    man = tr.export(tmp_path)
    assert len(man["files"]) == len(tr.snapshots)
    with open(os.path.join(tmp_path, f"manifest_{man['config_hash']}.json")) as fh:
        disk = json.load(fh)
    assert disk["times"] == tr.times.tolist()
    first = open(os.path.join(tmp_path, man["files"][0])).read().splitlines()
    assert first[0] == "# version=1" and first[3] == "r,u,ut"
    # same configuration, same hash
    assert tr.manifest()["config_hash"] == man["config_hash"]


def test_evolve_both_directions():
    cfg = SolverConfig(h=0.05, r_max=20.0)
    grid = cfg.grid(6)
    u0 = profile_from_function(grid, lambda r: bump(r - 3.0))
    fwd, bwd = evolve_both(6, Potential.soliton(), CauchyData(u0, u0.scale(0.0)), 4.0, cfg)
    assert fwd.time_sign == 1 and bwd.time_sign == -1
    # data (u0, 0) gives an even solution in t
    assert np.allclose(fwd.snapshots[-1].u, bwd.snapshots[-1].u)


def test_multisoliton_potential_validation():
    with pytest.raises(ValueError):
        Potential.multisoliton((0.5, 1.0))
    p = Potential.multisoliton((1.0, 0.25))
    r = np.array([0.0, 1.0])
    expected = P.potential(6, r) + 16.0 * P.potential(6, r / 0.25)
    assert np.allclose(p.values(6, r), expected)


def test_cauchy_data_support_and_norm():
    grid = RadialGrid.uniform(6, 10.0, 0.01)
    u0 = profile_from_function(grid, lambda r: bump(r - 3.0))
    d = CauchyData(u0, u0.scale(0.0))
    assert d.support_radius == pytest.approx(4.0, abs=0.011)
    assert d.energy_norm > 0
    other = RadialGrid.uniform(6, 10.0, 0.02)
    with pytest.raises(ValueError):
        CauchyData(u0, profile_from_function(other, lambda r: r))
