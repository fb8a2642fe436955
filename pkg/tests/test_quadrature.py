import numpy as np
import pytest

from fpsi.quadrature import edge_rule, triangle_rule
from oracles import edge_monomial, triangle_monomial


def test_area():
    assert triangle_rule(1).weights.sum() == pytest.approx(0.5, abs=1e-15)


def test_linear_moment():
    q = triangle_rule(1)
    assert q.weights @ q.points[:, 0] == pytest.approx(float(triangle_monomial(1, 0)), abs=1e-14)
    assert float(triangle_monomial(1, 0)) == pytest.approx(1 / 6)


def test_cubic_moment():
    q = triangle_rule(3)
    x, y = q.points.T
    assert q.weights @ (x ** 2 * y) == pytest.approx(1 / 60, abs=1e-14)
    assert float(triangle_monomial(2, 1)) == pytest.approx(1 / 60)


@pytest.mark.parametrize("degree", range(1, 11))
def test_triangle_rule_exact_to_degree(degree):
    q = triangle_rule(degree)
    x, y = q.points.T
    assert np.all(q.weights > 0)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            assert q.weights @ (x ** a * y ** b) == pytest.approx(float(triangle_monomial(a, b)),
                                                                abs=1e-13)


@pytest.mark.parametrize("degree", range(1, 11))
def test_edge_rule_exact_to_degree(degree):
    q = edge_rule(degree)
    for k in range(degree + 1):
        assert q.weights @ q.points ** k == pytest.approx(float(edge_monomial(k)), abs=1e-14)


def test_edge_basic_values():
    assert edge_rule(1).weights.sum() == pytest.approx(1.0)
    q = edge_rule(1)
    assert q.weights @ q.points == pytest.approx(0.5)
    q = edge_rule(3)
    assert len(q.points) == 2
    assert q.weights @ q.points ** 3 == pytest.approx(0.25, abs=1e-15)


@pytest.mark.parametrize("bad", [0, 11, 2.5, -1])
def test_unsupported_degree(bad):
    with pytest.raises(ValueError):
        triangle_rule(bad)
    with pytest.raises(ValueError):
        edge_rule(bad)
