"""Quadrature on the reference triangle and the unit edge."""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 10


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Points are reference coordinates: (n, 2) on the triangle
    {x, y >= 0, x + y <= 1}, (n,) on [0, 1] for edges."""

    points: np.ndarray
    weights: np.ndarray
    exact_degree: int


def _check(degree):
    if not isinstance(degree, (int, np.integer)) or not 1 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree!r}; need 1..{MAX_DEGREE}")


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed Gauss-Jacobi (Stroud conical product) rule.

    Uses ``n = ceil((degree + 1) / 2)`` points per direction, exact for
    total degree ``2n - 1`` with all weights positive.
    """
    _check(degree)
    n = math.ceil((degree + 1) / 2)
    # x-direction Gauss-Jacobi with weight (1 - s) absorbs the collapse Jacobian
    a, wa = roots_jacobi(n, 1.0, 0.0)
    b, wb = roots_jacobi(n, 0.0, 0.0)
    s = 0.5 * (a + 1.0)
    t = 0.5 * (b + 1.0)
    ws = wa / 4.0   # int_0^1 (1 - s) g(s) ds
    wt = wb / 2.0
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    x = S
    y = (1.0 - S) * T
    pts = np.column_stack([x.ravel(), y.ravel()])
    w = W.ravel()
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, 2 * n - 1)


@lru_cache(maxsize=None)
def edge_rule(degree):
    """Gauss-Legendre rule mapped to [0, 1]."""
    _check(degree)
    n = math.ceil((degree + 1) / 2)
    x, w = np.polynomial.legendre.leggauss(n)
    pts = 0.5 * (x + 1.0)
    w = 0.5 * w
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, 2 * n - 1)


def clamp_degree(degree):
    return int(min(max(degree, 1), MAX_DEGREE))
