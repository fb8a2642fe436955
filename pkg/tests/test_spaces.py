import numpy as np
import pytest

from fpsi.elements import ElementKind
from fpsi.mesh import BoundaryTag
from fpsi.spaces import (FunctionSpace, MultiplierSpace, SpaceError, build_coupled_spaces,
                         essential_bc_mask, piola_map)


@pytest.mark.parametrize("kind, n", [(ElementKind.P1, 4), (ElementKind.RT0, 5), (ElementKind.P2, 9),
                                     (ElementKind.P0, 2), (ElementKind.P1dc, 6),
                                     (ElementKind.P1Bubble, 6), (ElementKind.RT1, 14)])
def test_dof_counts_on_two_triangles(unit_pair, kind, n):
    assert FunctionSpace(unit_pair.fluid, kind).ndofs == n


def test_vector_space_doubles(unit_pair):
    assert FunctionSpace(unit_pair.fluid, ElementKind.P2, vector=True).ndofs == 18


def test_piola_identity():
    ref = np.random.default_rng(0).normal(size=(1, 3, 4, 2))
    v, d = piola_map(np.eye(2)[None], np.ones(1), ref, np.ones((1, 3, 4)))
    np.testing.assert_array_equal(v, ref)
    np.testing.assert_array_equal(d, 1.0)


def test_piola_scaling():
    ref = np.random.default_rng(1).normal(size=(1, 3, 4, 2))
    div = np.random.default_rng(2).normal(size=(1, 3, 4))
    v, d = piola_map(2 * np.eye(2)[None], np.array([4.0]), ref, div)
    np.testing.assert_allclose(v, ref / 2, rtol=1e-15)
    np.testing.assert_allclose(d, div / 4, rtol=1e-15)


def test_piola_rejects_inverted():
    with pytest.raises(SpaceError):
        piola_map(np.eye(2)[None], np.array([-1.0]), np.zeros((1, 1, 1, 2)))


def _random_points(space, rng, n=30):
    m = space.mesh
    cells = rng.integers(0, m.n_cells, n)
    r = rng.random((n, 2))
    r = np.where(r.sum(axis=1, keepdims=True) > 1, 1 - r, r)
    return cells, r


@pytest.mark.parametrize("kind", [ElementKind.RT0, ElementKind.RT1])
def test_rt_reproduces_constants(small_pair, rng, kind):
    V = FunctionSpace(small_pair.poro, kind)
    c = V.interpolate(lambda x, y: np.stack([np.ones_like(x), np.zeros_like(x)]))
    cells, r = _random_points(V, rng)
    B = V.evaluate(cells, r[:, None, :], derivatives=False)
    val = np.einsum("ci,ciqa->cqa", c[B.dofs], B.val)[:, 0]
    np.testing.assert_allclose(val, np.tile([1.0, 0.0], (len(cells), 1)), atol=1e-14)


def test_zero_coefficients_evaluate_to_zero(small_pair):
    V = FunctionSpace(small_pair.fluid, ElementKind.P2)
    assert V.eval_field(np.zeros(V.ndofs), (0.3, 0.4))["value"] == 0.0


def test_p1_reproduces_linear(small_pair, rng):
    V = FunctionSpace(small_pair.fluid, ElementKind.P1)
    c = V.interpolate(lambda x, y: x)
    for p in rng.random((20, 2)):
        assert V.eval_field(c, p)["value"] == pytest.approx(p[0], abs=1e-14)


@pytest.mark.parametrize("kind", [ElementKind.P2, ElementKind.P1Bubble])
def test_interpolant_exact_in_space(small_pair, rng, kind):
    V = FunctionSpace(small_pair.fluid, kind)
    f = (lambda x, y: x ** 2) if kind is ElementKind.P2 else (lambda x, y: 2 * x - y + 0.5)
    c = V.interpolate(f)
    for p in rng.random((20, 2)):
        assert V.eval_field(c, p)["value"] == pytest.approx(f(*p), abs=1e-13)


def test_zero_essential_values(small_pair):
    V = FunctionSpace(small_pair.fluid, ElementKind.P1, vector=True)
    d, v = essential_bc_mask(V, [BoundaryTag.GammaF])
    assert len(d) > 0 and np.all(v == 0)


def test_p1_edge_sets_two_x_dofs(unit_pair):
    V = FunctionSpace(unit_pair.fluid, ElementKind.P1, vector=True)
    # top side of the fluid square is the only GammaF edge on y = 1
    m = V.mesh
    top = [k for k, (a, b) in enumerate(m.boundary_edges)
           if m.vertices[a, 1] == 1 and m.vertices[b, 1] == 1]
    assert len(top) == 1
    d, v = essential_bc_mask(V, [BoundaryTag.GammaF],
                             lambda x, y, t: np.stack([np.ones_like(x), np.zeros_like(x)]),
                             components=(0,))
    on_top = np.isin(d, m.boundary_edges[top[0]])
    assert on_top.sum() == 2 and np.all(v[on_top] == 1.0)


def test_rt0_edge_moment(unit_pair):
    V = FunctionSpace(unit_pair.fluid, ElementKind.RT0)
    m = V.mesh
    d, v = essential_bc_mask(V, [BoundaryTag.GammaF],
                             lambda x, y, t: np.stack([np.zeros_like(x), x]))
    a, b = m.vertices[m.edges[d, 0]], m.vertices[m.edges[d, 1]]
    top = (a[:, 1] == 1) & (b[:, 1] == 1)
    assert top.sum() == 1
    t = (b - a)[top][0]
    n_y = -t[0] / np.linalg.norm(t)
    # int_0^1 x dx = 1/2 times the normal component
    assert v[top][0] == pytest.approx(0.5 * n_y, abs=1e-14)


def test_essential_on_missing_tag(unit_pair):
    V = FunctionSpace(unit_pair.fluid, ElementKind.P1)
    with pytest.raises(SpaceError):
        essential_bc_mask(V, [BoundaryTag.PExt])


def test_multiplier_degree_check(unit_pair):
    with pytest.raises(SpaceError):
        MultiplierSpace(unit_pair, 2)


@pytest.mark.parametrize("family, sizes", [
    ("lower", dict(u_f=2 * (9 + 8), p_f=9, u_p=8 + 16 - 4 - 4 + 4 + 12 - 12, lam=2)),
])
def test_coupled_space_sizes(family, sizes):
    from fpsi.mesh import build_rectangle_coupled_mesh
    m = build_rectangle_coupled_mesh((0, 1, -1, 1), 0.0, 2, 2, 2)
    s = build_coupled_spaces(m, family).sizes()
    assert s["u_f"] == sizes["u_f"] and s["p_f"] == sizes["p_f"] and s["lam"] == sizes["lam"]
    assert s["u_p"] == m.poro.n_edges and s["p_p"] == m.poro.n_cells


def test_unknown_family(unit_pair):
    with pytest.raises(ValueError):
        build_coupled_spaces(unit_pair, "middle")
