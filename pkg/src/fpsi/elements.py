"""
Reference finite elements on the triangle with vertices (0,0), (1,0), (0,1).

Each element exposes basis values (and gradients or divergences) at
arbitrary reference points, together with its degree-of-freedom
functionals written as weighted point evaluations::

    N_k(v) = sum_q W[k, q] . v(P[q])

so duality ``N_k(phi_j) = delta_kj`` can be checked directly.
"""
import enum

import numpy as np

from .quadrature import edge_rule, triangle_rule

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


class ElementKind(enum.Enum):
    P0 = "P0"
    P1 = "P1"
    P1Bubble = "P1Bubble"
    P2 = "P2"
    P1dc = "P1dc"
    RT0 = "RT0"
    RT1 = "RT1"

    @property
    def is_hdiv(self):
        return self in (ElementKind.RT0, ElementKind.RT1)


def barycentric(pts):
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    return np.stack([1.0 - x - y, x, y])


# gradients of barycentric coordinates on the reference triangle
DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def edge_points(local_edge, s):
    """Reference points on local edge ``local_edge`` at parameters ``s`` (a -> b)."""
    a, b = LOCAL_EDGES[local_edge]
    s = np.asarray(s, dtype=float)[..., None]
    return (1.0 - s) * REF_VERTICES[a] + s * REF_VERTICES[b]


def edge_outward_normal(local_edge):
    a, b = LOCAL_EDGES[local_edge]
    t = REF_VERTICES[b] - REF_VERTICES[a]
    n = np.array([t[1], -t[0]])
    return n / np.linalg.norm(n), float(np.linalg.norm(t))


class ReferenceElement:
    kind = None
    degree = 0
    ndof = 0
    hdiv = False

    def eval(self, pts):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class LagrangeElement(ReferenceElement):
    """Scalar element; ``nodes`` gives the point-evaluation dofs."""

    nodes = None

    def functionals(self):
        P = np.asarray(self.nodes, dtype=float)
        return P, np.eye(len(P))


class P0(LagrangeElement):
    kind = ElementKind.P0
    degree = 0
    ndof = 1

    def eval(self, pts):
        return np.ones((1, len(np.atleast_2d(pts))))

    def grad(self, pts):
        return np.zeros((1, len(np.atleast_2d(pts)), 2))

    def functionals(self):
        # cell mean: (1/|T|) int_T v
        q = triangle_rule(2)
        return q.points, (q.weights / 0.5)[None, :]


class P1(LagrangeElement):
    kind = ElementKind.P1
    degree = 1
    ndof = 3
    nodes = REF_VERTICES

    def eval(self, pts):
        return barycentric(pts)

    def grad(self, pts):
        n = len(np.atleast_2d(pts))
        return np.broadcast_to(DLAMBDA[:, None, :], (3, n, 2)).copy()


class P1dc(P1):
    kind = ElementKind.P1dc


class P1Bubble(LagrangeElement):
    """P1 plus the cubic bubble 27 l0 l1 l2 as a hierarchical cell dof."""

    kind = ElementKind.P1Bubble
    degree = 3
    ndof = 4

    def eval(self, pts):
        L = barycentric(pts)
        return np.vstack([L, 27.0 * L[0] * L[1] * L[2]])

    def grad(self, pts):
        L = barycentric(pts)
        n = L.shape[1]
        g = np.empty((4, n, 2))
        g[:3] = DLAMBDA[:, None, :]
        gb = (L[1] * L[2])[:, None] * DLAMBDA[0] + (L[0] * L[2])[:, None] * DLAMBDA[1] \
            + (L[0] * L[1])[:, None] * DLAMBDA[2]
        g[3] = 27.0 * gb
        return g

    def functionals(self):
        P = np.vstack([REF_VERTICES, [[1 / 3, 1 / 3]]])
        W = np.zeros((4, 4))
        W[:3, :3] = np.eye(3)
        # bubble dof: v(centroid) minus the linear interpolant there
        W[3] = [-1 / 3, -1 / 3, -1 / 3, 1.0]
        return P, W


class P2(LagrangeElement):
    kind = ElementKind.P2
    degree = 2
    ndof = 6
    # vertices, then midpoints of local edges 0, 1, 2
    nodes = np.vstack([REF_VERTICES, 0.5 * (REF_VERTICES[LOCAL_EDGES[:, 0]]
                                           + REF_VERTICES[LOCAL_EDGES[:, 1]])])

    def eval(self, pts):
        L = barycentric(pts)
        out = [L[i] * (2 * L[i] - 1) for i in range(3)]
        out += [4 * L[a] * L[b] for a, b in LOCAL_EDGES]
        return np.array(out)

    def grad(self, pts):
        L = barycentric(pts)
        n = L.shape[1]
        g = np.empty((6, n, 2))
        for i in range(3):
            g[i] = (4 * L[i] - 1)[:, None] * DLAMBDA[i]
        for k, (a, b) in enumerate(LOCAL_EDGES):
            g[3 + k] = 4 * (L[b][:, None] * DLAMBDA[a] + L[a][:, None] * DLAMBDA[b])
        return g


class RaviartThomas(ReferenceElement):
    """RT_k built by inverting the dof-functional matrix on a prime basis.

    Edge dofs are moments of v.n against the Lagrange basis of P_k on each
    local edge (parameter running a -> b); RT1 adds the two cell moments
    int_T v_x and int_T v_y.
    """

    hdiv = True

    def __init__(self, k):
        if k not in (0, 1):
            raise ValueError("only RT0 and RT1 are provided")
        self.k = k
        self.degree = k + 1
        self.kind = ElementKind.RT0 if k == 0 else ElementKind.RT1
        P, W = self._functionals()
        V = np.einsum("kqc,mqc->km", W, self._prime(P))
        self.coeffs = np.linalg.inv(V)  # basis_j = sum_m C[m, j] prime_m
        self.ndof = V.shape[0]
        self._P, self._W = P, W

    def _prime(self, pts):
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        one, zero = np.ones_like(x), np.zeros_like(x)
        if self.k == 0:
            fs = [(one, zero), (zero, one), (x, y)]
        else:
            fs = [(one, zero), (x, zero), (y, zero), (zero, one), (zero, x), (zero, y),
                  (x * x, x * y), (x * y, y * y)]
        return np.array([np.stack(f, axis=-1) for f in fs])  # (m, n, 2)

    def _prime_div(self, pts):
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        one, zero = np.ones_like(x), np.zeros_like(x)
        if self.k == 0:
            ds = [zero, zero, 2 * one]
        else:
            ds = [zero, one, zero, zero, zero, one, 3 * x, 3 * y]
        return np.array(ds)

    def _functionals(self):
        q = edge_rule(2 * self.k + 2)
        pts, wts = [], []
        rows = []
        npts_edge = len(q.points)
        for e in range(3):
            n, length = edge_outward_normal(e)
            P = edge_points(e, q.points)
            if self.k == 0:
                tests = [np.ones_like(q.points)]
            else:
                tests = [1.0 - q.points, q.points]
            for tst in tests:
                rows.append((len(pts), (q.weights * tst * length)[:, None] * n))
            pts.append(P)
        cell_rows = []
        if self.k == 1:
            qt = triangle_rule(2)
            for c in range(2):
                w = np.zeros((len(qt.points), 2))
                w[:, c] = qt.weights
                cell_rows.append(w)
        all_pts = np.vstack(pts + ([triangle_rule(2).points] if self.k == 1 else []))
        nq = len(all_pts)
        W = []
        for block, w in rows:
            full = np.zeros((nq, 2))
            full[block * npts_edge:(block + 1) * npts_edge] = w
            W.append(full)
        for w in cell_rows:
            full = np.zeros((nq, 2))
            full[3 * npts_edge:] = w
            W.append(full)
        return all_pts, np.array(W)

    def functionals(self):
        return self._P, self._W

    def eval(self, pts):
        return np.einsum("mj,mnc->jnc", self.coeffs, self._prime(pts))

    def div(self, pts):
        return np.einsum("mj,mn->jn", self.coeffs, self._prime_div(pts))

    def edge_dofs(self, local_edge):
        """Local dof indices attached to ``local_edge`` (in a -> b order)."""
        m = self.k + 1
        return list(range(local_edge * m, (local_edge + 1) * m))


_REGISTRY = {
    ElementKind.P0: P0(),
    ElementKind.P1: P1(),
    ElementKind.P1dc: P1dc(),
    ElementKind.P1Bubble: P1Bubble(),
    ElementKind.P2: P2(),
    ElementKind.RT0: RaviartThomas(0),
    ElementKind.RT1: RaviartThomas(1),
}


def reference_element(kind):
    return _REGISTRY[ElementKind(kind)]


def apply_functionals(element, fn):
    """Apply every dof functional of ``element`` to a reference-space callable."""
    P, W = element.functionals()
    vals = np.asarray(fn(P))
    if element.hdiv:
        return np.einsum("kqc,qc->k", W, vals)
    return W @ vals
