"""Bilinear and linear forms against analytic values on unit squares."""
import numpy as np
import pytest

from fpsi.assembly import (ProblemCoefficients, SourceFunctions, apply_essential, assemble_af,
                           assemble_ape, assemble_apd, assemble_b, assemble_bgamma, assemble_bjs,
                           assemble_convection, assemble_mass, assemble_rhs,
                           assemble_static_blocks, boundary_traction_load, compose_step_system,
                           load_vector)
from fpsi.benchmark import arterial_sources
from fpsi.elements import ElementKind
from fpsi.mesh import BoundaryTag, Subdomain, SubMesh, build_channel_mesh
from fpsi.spaces import FunctionSpace, build_coupled_spaces
from oracles import p1_reference_mass

TOL = 1e-10
FAMILIES = ("lower", "higher")


def vec(fx, fy):
    return lambda x, y: np.stack([np.broadcast_to(fx(x, y), np.shape(x)),
                                  np.broadcast_to(fy(x, y), np.shape(x))]).astype(float)


ZERO = lambda x, y: 0 * x
ONE = lambda x, y: 0 * x + 1


@pytest.fixture(params=FAMILIES)
def spaces(request, small_pair):
    return build_coupled_spaces(small_pair, request.param)


def form(A, u, v=None):
    return float((u if v is None else v) @ (A @ u))


# --- fluid viscous form ---------------------------------------------------

def test_af_constant_and_rotation_vanish(spaces):
    A = assemble_af(spaces.u_f, 1.0)
    assert abs(form(A, spaces.u_f.interpolate(vec(ONE, ZERO)))) < TOL
    assert abs(form(A, spaces.u_f.interpolate(vec(lambda x, y: -y, lambda x, y: x)))) < TOL


def test_af_stretch(spaces):
    u = spaces.u_f.interpolate(vec(lambda x, y: x, ZERO))
    assert form(assemble_af(spaces.u_f, 1.0), u) == pytest.approx(2.0, abs=TOL)


# --- Darcy resistance -------------------------------------------------------

def test_apd_constant_flux(spaces):
    u = spaces.u_p.interpolate(vec(ONE, ZERO))
    assert form(assemble_apd(spaces.u_p, 1.0, np.eye(2)), u) == pytest.approx(1.0, abs=TOL)
    assert form(assemble_apd(spaces.u_p, 1.0, 2 * np.eye(2)), u) == pytest.approx(0.5, abs=TOL)
    assert form(assemble_apd(spaces.u_p, 1.0, np.eye(2)), 0 * u) == 0.0


# --- elasticity -------------------------------------------------------------

def test_ape_rotation_vanishes(spaces):
    e = spaces.eta.interpolate(vec(lambda x, y: -y, lambda x, y: x))
    assert abs(form(assemble_ape(spaces.eta, 1.0, 1.0), e)) < TOL


def test_ape_stretch(spaces):
    e = spaces.eta.interpolate(vec(lambda x, y: x, ZERO))
    assert form(assemble_ape(spaces.eta, 1.0, 1.0), e) == pytest.approx(3.0, abs=TOL)


def test_ape_spring(spaces):
    e = spaces.eta.interpolate(vec(ONE, ZERO))
    assert form(assemble_ape(spaces.eta, 1.0, 1.0, xi=5.0), e) == pytest.approx(5.0, abs=TOL)


# --- divergence forms -------------------------------------------------------

@pytest.mark.parametrize("which", ["fluid", "darcy", "solid"])
def test_b_forms(spaces, which):
    V, W = {"fluid": (spaces.u_f, spaces.p_f), "darcy": (spaces.u_p, spaces.p_p),
            "solid": (spaces.eta, spaces.p_p)}[which]
    B = assemble_b(V, W)
    w = W.interpolate(ONE)
    assert w @ B @ V.interpolate(vec(lambda x, y: x, lambda x, y: y)) == pytest.approx(-2.0, abs=TOL)
    rot = V.interpolate(vec(lambda x, y: -y, lambda x, y: x))
    assert np.abs(B @ rot).max() < TOL
    assert np.abs(0 * w @ B).max() == 0.0


# --- mass -------------------------------------------------------------------

def test_mass_partition_of_unity(spaces):
    for S in (spaces.p_f, spaces.p_p):
        one = S.interpolate(ONE)
        assert form(assemble_mass(S, 2.5), one) == pytest.approx(2.5, abs=TOL)
    assert assemble_mass(spaces.p_f, 0.0).count_nonzero() == 0


def test_p1_reference_triangle_mass():
    tri = SubMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]),
                  np.array([[0, 1], [1, 2], [2, 0]]), (BoundaryTag.GammaF,) * 3, Subdomain.Fluid)
    M = assemble_mass(FunctionSpace(tri, ElementKind.P1), 3.0).toarray()
    np.testing.assert_allclose(M, 3.0 * p1_reference_mass(), atol=TOL)
    np.testing.assert_allclose(p1_reference_mass(), np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24,
                               atol=1e-16)


# --- convection -------------------------------------------------------------

def test_convection(spaces):
    V = spaces.u_f
    w = V.interpolate(vec(ONE, ZERO))
    u = V.interpolate(vec(lambda x, y: x, ZERO))
    N = assemble_convection(V, w)
    assert form(N, u) == pytest.approx(0.5, abs=TOL)
    assert assemble_convection(V, 0 * w).count_nonzero() == 0
    diff = assemble_convection(V, 2 * w) - 2 * N
    assert abs(diff).max() < TOL


def test_convection_shape_check(spaces):
    with pytest.raises(ValueError):
        assemble_convection(spaces.u_f, np.zeros(3))


# --- interface forms --------------------------------------------------------

def _bjs_form(S, u, e):
    return form(S["ff"], u) + 2 * (u @ S["fe"] @ e) + form(S["ee"], e)


def test_bjs(spaces, small_pair):
    c = ProblemCoefficients(mu_f=2.0, alpha_bjs=3.0, K=4.0 * np.eye(2))
    S = assemble_bjs(spaces.u_f, spaces.eta, small_pair, c)
    u = spaces.u_f.interpolate(vec(ONE, ZERO))
    e = spaces.eta.interpolate(vec(ONE, ZERO))
    assert abs(_bjs_form(S, u, e)) < TOL
    un = spaces.u_f.interpolate(vec(ZERO, ONE))
    assert abs(_bjs_form(S, un, 0 * e)) < TOL
    # mu_f alpha_BJS / sqrt(K) = 2 * 3 / 2 over an interface of length 1
    assert _bjs_form(S, u, 0 * e) == pytest.approx(3.0, abs=TOL)


def test_bgamma(spaces, small_pair, rng):
    G_f, G_p, G_e = assemble_bgamma(spaces.u_f, spaces.u_p, spaces.eta, spaces.lam, small_pair)
    one = spaces.lam.interpolate(ONE)
    # n_f = (0, -1) on the interface
    vf = spaces.u_f.interpolate(vec(ZERO, lambda x, y: -1 + 0 * x))
    assert one @ G_f @ vf == pytest.approx(1.0, abs=TOL)
    vp = spaces.u_p.interpolate(vec(ZERO, ONE))
    assert one @ G_p @ vp == pytest.approx(1.0, abs=TOL)
    up = spaces.u_f.interpolate(vec(ZERO, ONE))
    xi = spaces.eta.interpolate(vec(ZERO, ONE))
    mu = rng.normal(size=spaces.lam.ndofs)
    assert abs(mu @ (G_f @ up + G_e @ xi)) < TOL
    assert abs(0 * mu @ G_f @ vf) == 0.0


def test_bgamma_wider_interface():
    from fpsi.mesh import build_rectangle_coupled_mesh
    m = build_rectangle_coupled_mesh((0.0, 2.5, -1.0, 1.0), 0.0, 5, 2, 2)
    sp_ = build_coupled_spaces(m, "lower")
    G_f, _, _ = assemble_bgamma(sp_.u_f, sp_.u_p, sp_.eta, sp_.lam, m)
    vf = sp_.u_f.interpolate(vec(ZERO, lambda x, y: -1 + 0 * x))
    assert sp_.lam.interpolate(ONE) @ G_f @ vf == pytest.approx(2.5, abs=TOL)


# --- loads ------------------------------------------------------------------

def test_zero_sources_zero_rhs(spaces):
    r = assemble_rhs(SourceFunctions(), spaces, 0.3)
    assert all(np.all(v == 0) for v in r.values())


def test_body_force_partition_of_unity(small_pair):
    V = FunctionSpace(small_pair.fluid, ElementKind.P1, vector=True)
    F = load_vector(V, vec(ONE, ZERO))
    assert F[:V.n_scalar].sum() == pytest.approx(1.0, abs=TOL)
    assert np.abs(F[V.n_scalar:]).max() < TOL


def test_inlet_pressure_load():
    m = build_channel_mesh(6.0, 0.5, 0.1, 6, 4, 1)
    sp_ = build_coupled_spaces(m, "lower")
    P, T_max = 100.0, 0.002
    src = arterial_sources(P, T_max)
    F = boundary_traction_load(sp_.u_f, [BoundaryTag.FInlet], src.fluid_traction[BoundaryTag.FInlet],
                               T_max / 2)
    # v.n = 1 on the inlet, whose outward normal is (-1, 0); height 2R = 1
    v = sp_.u_f.interpolate(vec(lambda x, y: -1 + 0 * x, ZERO))
    assert F @ v == pytest.approx(-P * 1.0, rel=1e-12)


# --- step system ------------------------------------------------------------

def _system(spaces, mesh, c, dt, **kw):
    blocks = assemble_static_blocks(spaces, mesh, c)
    return compose_step_system(blocks, c, dt, spaces, **kw), blocks


def test_mass_terms_scale_with_dt(spaces, small_pair):
    c = ProblemCoefficients(rho_f=2.0, rho_p=3.0, s0=0.5, alpha_bjs=0.0)
    s1, b = _system(spaces, small_pair, c, 0.1)
    s2, _ = _system(spaces, small_pair, c, 0.05)
    off, n = s1.offsets, s1.sizes
    def blk(A, f):
        i = slice(off[f], off[f] + n[f])
        return A[i][:, i]
    d = blk(s2.matrix, "u_f") - blk(s1.matrix, "u_f")
    assert abs(d - 2.0 * (20 - 10) * b.M_f).max() < TOL
    d = blk(s2.matrix, "eta") - blk(s1.matrix, "eta")
    assert abs(d - 3.0 * (400 - 100) * b.M_s).max() < 1e-8
    d = blk(s2.matrix, "p_p") - blk(s1.matrix, "p_p")
    assert abs(d - 0.5 * (20 - 10) * b.M_p).max() < TOL


def test_zero_history_zero_rhs(spaces, small_pair):
    s, _ = _system(spaces, small_pair, ProblemCoefficients(), 0.1)
    assert np.all(s.rhs == 0)


def test_apply_essential_sets_values(spaces, small_pair):
    s, _ = _system(spaces, small_pair, ProblemCoefficients(), 0.1)
    dofs = np.array([0, 3])
    out = apply_essential(s, dofs, np.array([1.5, -2.0]))
    import scipy.sparse.linalg as spla
    x = spla.spsolve(out.matrix.tocsc(), out.rhs)
    np.testing.assert_allclose(x[dofs], [1.5, -2.0], atol=1e-12)


def test_negative_dt_rejected(spaces, small_pair):
    with pytest.raises(ValueError):
        _system(spaces, small_pair, ProblemCoefficients(), -1.0)


@pytest.mark.parametrize("bad", [dict(mu_f=0), dict(alpha=1.5), dict(K=[[1, 2], [0, 1]]),
                                 dict(K=-np.eye(2)), dict(s0=-1)])
def test_coefficient_validation(bad):
    with pytest.raises(ValueError):
        ProblemCoefficients(**bad)
