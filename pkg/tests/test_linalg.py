import numpy as np
import pytest
import scipy.sparse as sp

from fpsi.assembly import assemble_b, assemble_h1_inner, assemble_mass
from fpsi.elements import ElementKind
from fpsi.linalg import (Factorization, LinearSolveError, ReusingSolver, equilibrate, lu_solve,
                         smallest_singular_estimate)
from fpsi.mesh import build_rectangle_coupled_mesh, uniform_refine
from fpsi.spaces import FunctionSpace, essential_bc_mask
from fpsi.verification import stokes_infsup
from oracles import dense_infsup


def test_identity_solve(rng):
    b = rng.normal(size=7)
    x, rep = lu_solve(sp.identity(7), b)
    np.testing.assert_allclose(x, b, atol=1e-15)
    assert rep.relative_residual < 1e-15


def test_diagonal_solve():
    x, _ = lu_solve(sp.diags([2.0, 4.0]), np.array([2.0, 4.0]))
    np.testing.assert_allclose(x, [1.0, 1.0])


@pytest.mark.parametrize("scale", [False, True])
def test_random_spd(rng, scale):
    Q = rng.normal(size=(50, 50))
    A = Q @ Q.T + 50 * np.eye(50)
    b = rng.normal(size=50)
    x, rep = lu_solve(sp.csc_matrix(A), b, scale=scale)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) < 1e-10
    assert rep.relative_residual < 1e-10


def test_singular_reported():
    A = sp.csc_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(LinearSolveError):
        lu_solve(A, np.array([1.0, 2.0]))


def test_shape_checks():
    with pytest.raises(LinearSolveError):
        lu_solve(sp.identity(3), np.ones(2))
    with pytest.raises(LinearSolveError):
        Factorization(sp.csc_matrix(np.ones((2, 3))))


def test_equilibrate_unit_maxima(rng):
    A = sp.csr_matrix(rng.random((6, 6)) * np.logspace(-6, 6, 6)[:, None])
    r, c = equilibrate(A)
    S = abs(sp.diags(r) @ A @ sp.diags(c)).toarray()
    np.testing.assert_allclose(S.max(axis=0), 1.0)
    assert S.max() <= 1.0 + 1e-15


def test_reusing_solver_refines_with_old_factors(rng):
    n = 40
    Q = rng.normal(size=(n, n))
    A0 = Q @ Q.T + n * np.eye(n)
    s = ReusingSolver(tol=1e-13)
    x0, rep0 = s.solve(sp.csc_matrix(A0), rng.normal(size=n))
    assert rep0.refactored
    A1 = A0 + 1e-3 * np.diag(rng.random(n))
    b = rng.normal(size=n)
    x1, rep1 = s.solve(sp.csc_matrix(A1), b)
    assert not rep1.refactored and rep1.refinement_steps >= 1
    assert np.linalg.norm(A1 @ x1 - b) <= 1e-13 * np.linalg.norm(b)


def test_reusing_solver_refactors_on_large_change(rng):
    n = 30
    A0 = np.eye(n)
    s = ReusingSolver()
    s.solve(sp.csc_matrix(A0), np.ones(n))
    A1 = np.diag(np.linspace(1, 100, n))
    x, rep = s.solve(sp.csc_matrix(A1), np.ones(n))
    assert rep.refactored
    np.testing.assert_allclose(A1 @ x, 1.0, rtol=1e-12)


def test_singular_value_trivial_cases():
    assert smallest_singular_estimate(sp.csr_matrix((3, 4))) == 0.0
    assert smallest_singular_estimate(np.eye(4)) == pytest.approx(1.0)


def test_singular_value_matches_dense_svd(rng):
    B = rng.normal(size=(4, 9))
    Q = rng.normal(size=(9, 9))
    Mv = Q @ Q.T + 9 * np.eye(9)
    R = rng.normal(size=(4, 4))
    Mw = R @ R.T + 4 * np.eye(4)
    assert smallest_singular_estimate(B, Mv, Mw) == pytest.approx(dense_infsup(B, Mv, Mw), rel=1e-10)


def _stokes_blocks(sub, vk, pk):
    V = FunctionSpace(sub, vk, vector=True)
    Q = FunctionSpace(sub, pk)
    d, _ = essential_bc_mask(V, sub.tags_present())
    free = np.ones(V.ndofs, bool)
    free[d] = False
    B = assemble_b(V, Q).tocsc()[:, free]
    H = assemble_h1_inner(V).tocsr()[free][:, free]
    return B, H, assemble_mass(Q), np.ones((Q.ndofs, 1))


@pytest.mark.parametrize("n", [2, 4])
def test_mini_infsup_dense_oracle(n):
    m = build_rectangle_coupled_mesh((0, 1, -1, 1), 0.0, n, n, n)
    B, H, Mq, Z = _stokes_blocks(m.fluid, ElementKind.P1Bubble, ElementKind.P1)
    ref = dense_infsup(B, H, Mq, Z)
    assert ref > 0.2
    assert stokes_infsup(m.fluid, ElementKind.P1Bubble, ElementKind.P1) == pytest.approx(ref, rel=1e-8)


def test_mini_infsup_stable_under_refinement():
    # a 2x2 grid has one interior vertex and is still pre-asymptotic
    m = build_rectangle_coupled_mesh((0, 1, -1, 1), 0.0, 4, 4, 4)
    a = stokes_infsup(m.fluid, ElementKind.P1Bubble, ElementKind.P1)
    b = stokes_infsup(uniform_refine(m).fluid, ElementKind.P1Bubble, ElementKind.P1)
    assert a > 0 and abs(b / a - 1) < 0.25


def test_equal_order_pair_has_no_control():
    m = build_rectangle_coupled_mesh((0, 1, -1, 1), 0.0, 4, 4, 4)
    B, H, Mq, Z = _stokes_blocks(m.fluid, ElementKind.P1, ElementKind.P1)
    assert dense_infsup(B, H, Mq, Z) < 1e-8
