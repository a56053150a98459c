import numpy as np
import pytest

from coel import profiles as P
from coel.errors import DegenerateBasisError
from coel.grid import RadialGrid, profile_from_function
from coel.projections import make_projector, project_out, rescaled_lambda_w

W_L2 = 2304.0       # ||W||^2_L2(R^6) = -<W, LW>, mpmath
LW_L2 = 3686.4      # ||LW||^2_L2(R^6), mpmath


def bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = np.abs(x) < 1
    out[m] = np.exp(-1.0 / (1.0 - x[m] ** 2))
    return out


@pytest.fixture(scope="module")
def grid6():
    return RadialGrid.uniform(6, 30.0, 0.01)


@pytest.fixture(scope="module")
def grid8():
    return RadialGrid.uniform(8, 30.0, 0.01)


def _f(grid, c=3.0, w=1.5):
    return profile_from_function(grid, lambda r: bump((r - c) / w) + 0.3 * bump((r - 1.0) / 0.8))


def test_basis_choices(grid6, grid8):
    assert make_projector("L2", 6, grid6).labels == ("LambdaW",)
    assert make_projector("L2", 6, grid6, R=0.5).labels == ("LambdaW", "GammaTilde")
    assert make_projector("L2", 6, grid6, R=2.0).labels == ("LambdaW",)
    assert make_projector("H1dot", 6, grid6).labels == ("LambdaW",)
    assert make_projector("H1dot", 8, grid8).labels == ("TInf0",)
    assert make_projector("H1dot", 8, grid8, R=2.0).labels == ("TInf0", "TInf1")
    assert make_projector("H1dot", 8, grid8, R=0.5).labels == ("TInf0", "TInf1", "chi0T01")


@pytest.mark.parametrize("kind,R", [("L2", 0.0), ("L2", 0.5), ("H1dot", 0.0), ("H1dot", 2.0)])
def test_idempotent_and_orthogonal(grid6, kind, R):
    p = make_projector(kind, 6, grid6, R=R)
    f = _f(grid6)
    pf = project_out(p, f)
    ppf = project_out(p, pf)
    scale = p.norm(f)
    assert p.norm(ppf - pf) < 1e-10 * scale
    for b in p.basis:
        assert abs(p.inner(pf, b)) < 1e-10 * scale * p.norm(b)


@pytest.mark.parametrize("R", [0.0, 0.5, 2.0])
def test_projector_8d(grid8, R):
    p = make_projector("H1dot", 8, grid8, R=R)
    f = _f(grid8)
    pf = project_out(p, f)
    assert p.norm(project_out(p, pf) - pf) < 1e-9 * p.norm(f)
    for b in p.basis:
        assert abs(p.inner(pf, b)) < 1e-9 * p.norm(f) * p.norm(b)


def test_self_adjoint_and_contraction(grid6):
    p = make_projector("L2", 6, grid6, R=0.5)
    f, g = _f(grid6), _f(grid6, 5.0, 2.0)
    pf, pg = project_out(p, f), project_out(p, g)
    assert p.inner(pf, g) == pytest.approx(p.inner(f, pg), rel=1e-10)
    assert p.norm(pf) <= p.norm(f) * (1 + 1e-12)


def test_basis_member_is_annihilated(grid6):
    p = make_projector("L2", 6, grid6)
    lw = P.lambda_w_profile(6, grid6)
    assert p.norm(project_out(p, lw)) < 1e-10 * p.norm(lw)


def test_project_out_ground_state():
    # W - <W, LW>/||LW||^2 LW = W + (||W||^2/||LW||^2) LW
    grid = RadialGrid.geometric(6, 1e-3, 1e5, 64)
    p = make_projector("L2", 6, grid)
    W = P.ground_state_profile(6, grid)
    c = p.coefficients(W)[0]
    assert c == pytest.approx(-W_L2 / LW_L2, rel=1e-5)
    pw = project_out(p, W)
    lw = P.lambda_w_profile(6, grid)
    expected = W.values + (W_L2 / LW_L2) * lw.values
    assert np.max(np.abs(pw.values - expected)) < 1e-5


def test_gram_diagonal_for_separated_scales():
    grid = RadialGrid.uniform(6, 40.0, 0.005)
    p = make_projector("L2", 6, grid, lam=(1.0, 1.0 / 64))
    G = p.gram
    off = abs(G[0, 1]) / np.sqrt(G[0, 0] * G[1, 1])
    assert off < 0.05
    # L2 rescaling keeps the norm; the small scale sees the whole tail on r < 40
    assert G[1, 1] == pytest.approx(LW_L2, rel=1e-4)


def test_rescaled_lambda_w_flavors(grid6):
    h1 = rescaled_lambda_w(grid6, 2.0, "H1")
    l2 = rescaled_lambda_w(grid6, 2.0, "L2")
    assert h1.values[0] == pytest.approx(2.0 ** -2 * 2.0)
    assert l2.values[0] == pytest.approx(2.0 ** -3 * 2.0)


def test_degenerate_scales_rejected():
    grid = RadialGrid.uniform(6, 20.0, 0.01)
    with pytest.raises(DegenerateBasisError):
        make_projector("L2", 6, grid, lam=(1.0, 1.0 - 1e-7))


def test_bad_arguments(grid6):
    with pytest.raises(ValueError):
        make_projector("L3", 6, grid6)
    with pytest.raises(ValueError):
        make_projector("L2", 6, grid6, R=-1.0)
    with pytest.raises(ValueError):
        make_projector("L2", 8, grid6)
    with pytest.raises(ValueError):
        make_projector("L2", 6, grid6, lam=(0.5, 1.0))


def test_describe(grid6):
    d = make_projector("L2", 6, grid6, R=0.5).describe()
    assert d["basis"] == ["LambdaW", "GammaTilde"]
    assert d["gram_condition"] >= 1.0
