"""
Global finite element spaces: dof maps, Piola transforms, evaluation,
interpolation and essential boundary data.

Vector H1 fields use two copies of a scalar Lagrange space with global
numbering ``component * n_scalar + scalar_dof``.  Raviart-Thomas spaces are
intrinsically vector valued; their edge dofs carry a global orientation
sign so normal traces agree between neighbouring cells.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elements import (LOCAL_EDGES, REF_VERTICES, ElementKind, edge_points,
                       reference_element)
from .mesh import BoundaryTag
from .quadrature import edge_rule, triangle_rule


class SpaceError(ValueError):
    pass


@dataclass
class Basis:
    """Physical basis data on a set of cells.

    ``val`` is (nc, nloc, nq) for scalar kinds and (nc, nloc, nq, 2) for
    H(div) kinds; ``grad`` is (nc, nloc, nq, 2); ``div`` is (nc, nloc, nq).
    ``dofs`` holds global (scalar) dof indices of each local function.
    """

    cells: np.ndarray
    x: np.ndarray
    val: np.ndarray
    dofs: np.ndarray
    grad: np.ndarray = None
    div: np.ndarray = None


def piola_map(J, detJ, ref_values, ref_divs=None):
    """Contravariant Piola transform of reference H(div) data.

    ``v = J vhat / det J`` and ``div v = div vhat / det J``.

    Parameters
    ----------
    J : (nc, 2, 2)
    detJ : (nc,)
    ref_values : (..., nc-broadcastable) array ending in a length-2 axis,
        shaped (nc, nloc, nq, 2)
    ref_divs : (nc, nloc, nq), optional
    """
    J = np.asarray(J, dtype=float)
    detJ = np.asarray(detJ, dtype=float)
    if np.any(detJ <= 0):
        raise SpaceError("degenerate or inverted element in Piola map")
    vals = np.einsum("cab,ciqb->ciqa", J, ref_values) / detJ[:, None, None, None]
    if ref_divs is None:
        return vals
    return vals, ref_divs / detJ[:, None, None]


def reference_to_physical(mesh, cells, ref_pts):
    v0 = mesh.vertices[mesh.triangles[cells, 0]]
    J = mesh.jacobians[cells]
    if ref_pts.ndim == 2:
        return v0[:, None, :] + np.einsum("cab,qb->cqa", J, ref_pts)
    return v0[:, None, :] + np.einsum("cab,cqb->cqa", J, ref_pts)


class FunctionSpace:
    """Dof map of one element kind on a submesh.

    Parameters
    ----------
    mesh : SubMesh
    kind : ElementKind
    vector : bool
        Two-component H1 field built from the scalar element.  Must be
        False for Raviart-Thomas kinds, which are vector valued already.
    """

    def __init__(self, mesh, kind, vector=False):
        kind = ElementKind(kind)
        if kind.is_hdiv and vector:
            raise SpaceError(f"{kind.value} is intrinsically vector valued; vector=True is invalid")
        self.mesh = mesh
        self.kind = kind
        self.element = reference_element(kind)
        self.ncomp = 2 if vector else 1
        self.vector = vector
        self._build()

    def __repr__(self):
        v = " vector" if self.vector else ""
        return f"<FunctionSpace {self.kind.value}{v} ndofs={self.ndofs}>"

    def _build(self):
        m = self.mesh
        nt, nv, ne = m.n_cells, m.n_vertices, m.n_edges
        t = m.triangles
        signs = np.ones((nt, self.element.ndof))
        k = self.kind
        if k is ElementKind.P0:
            dofs = np.arange(nt)[:, None]
            n = nt
        elif k is ElementKind.P1:
            dofs, n = t.copy(), nv
        elif k is ElementKind.P1dc:
            dofs, n = np.arange(3 * nt).reshape(nt, 3), 3 * nt
        elif k is ElementKind.P1Bubble:
            dofs = np.column_stack([t, nv + np.arange(nt)])
            n = nv + nt
        elif k is ElementKind.P2:
            dofs = np.column_stack([t, nv + m.cell_edges])
            n = nv + ne
        elif k is ElementKind.RT0:
            dofs = m.cell_edges.copy()
            signs = m.cell_edge_signs.astype(float)
            n = ne
        elif k is ElementKind.RT1:
            s = m.cell_edge_signs
            e = m.cell_edges
            near_a = np.where(s > 0, 2 * e, 2 * e + 1)
            near_b = np.where(s > 0, 2 * e + 1, 2 * e)
            dofs = np.empty((nt, 8), dtype=np.int64)
            dofs[:, 0:6:2] = near_a
            dofs[:, 1:6:2] = near_b
            dofs[:, 6] = 2 * ne + 2 * np.arange(nt)
            dofs[:, 7] = 2 * ne + 2 * np.arange(nt) + 1
            signs = np.ones((nt, 8))
            signs[:, 0:6:2] = s
            signs[:, 1:6:2] = s
            n = 2 * ne + 2 * nt
        else:  # pragma: no cover
            raise SpaceError(f"unknown element kind {k}")
        self.cell_dofs = np.ascontiguousarray(dofs, dtype=np.int64)
        self.cell_signs = signs
        self.n_scalar = int(n)

    @property
    def ndofs(self):
        return self.n_scalar * self.ncomp

    @property
    def hdiv(self):
        return self.kind.is_hdiv

    @property
    def degree(self):
        return self.element.degree

    def component_dofs(self, comp):
        return self.cell_dofs + comp * self.n_scalar

    # ------------------------------------------------------------------
    def evaluate(self, cells=None, ref_pts=None, derivatives=True):
        """Physical basis on ``cells`` at reference points.

        ``ref_pts`` is (nq, 2) shared by all cells or (nc, nq, 2) per cell.
        """
        m = self.mesh
        if cells is None:
            cells = np.arange(m.n_cells)
        cells = np.asarray(cells, dtype=np.int64)
        ref_pts = np.asarray(ref_pts, dtype=float)
        per_cell = ref_pts.ndim == 3
        el = self.element
        flat = ref_pts.reshape(-1, 2)

        def shape(a):
            # element output (nloc, npts, ...) -> (nc, nloc, nq, ...)
            if per_cell:
                nc, nq = ref_pts.shape[:2]
                a = a.reshape((a.shape[0], nc, nq) + a.shape[2:])
                return np.moveaxis(a, 1, 0)
            return np.broadcast_to(a[None], (len(cells),) + a.shape)

        x = reference_to_physical(m, cells, ref_pts)
        dofs = self.cell_dofs[cells]
        if self.hdiv:
            J = m.jacobians[cells]
            d = m.det_jacobians[cells]
            sg = self.cell_signs[cells][:, :, None]
            v, dv = piola_map(J, d, shape(el.eval(flat)), shape(el.div(flat)))
            return Basis(cells, x, v * sg[..., None], dofs, div=dv * sg)
        val = np.ascontiguousarray(shape(el.eval(flat)))
        grad = None
        if derivatives:
            invJ = m.inv_jacobians[cells]
            grad = np.einsum("cba,ciqb->ciqa", invJ, shape(el.grad(flat)))
        return Basis(cells, x, val, dofs, grad=grad)

    # ------------------------------------------------------------------
    def locate(self, point, cell=None, tol=1e-10):
        """Return (cell, reference point) containing ``point``."""
        m = self.mesh
        point = np.asarray(point, dtype=float)
        cells = np.arange(m.n_cells) if cell is None else np.array([cell])
        v0 = m.vertices[m.triangles[cells, 0]]
        ref = np.einsum("cab,cb->ca", m.inv_jacobians[cells], point - v0)
        lam = np.column_stack([1 - ref.sum(axis=1), ref])
        ok = lam.min(axis=1) >= -tol
        if not ok.any():
            where = f"element {cell}" if cell is not None else "the mesh"
            raise SpaceError(f"point {tuple(point)} lies outside {where}")
        i = int(np.nonzero(ok)[0][0])
        return int(cells[i]), ref[i]

    def eval_field(self, coeffs, point, cell=None):
        """Value, gradient (H1) or divergence (H(div)) of a discrete field."""
        coeffs = np.asarray(coeffs, dtype=float)
        c, ref = self.locate(point, cell)
        B = self.evaluate([c], ref[None])
        if self.hdiv:
            u = coeffs[B.dofs[0]]
            return {"value": np.einsum("i,ia->a", u, B.val[0, :, 0]),
                    "div": float(u @ B.div[0, :, 0])}
        vals, grads = [], []
        for comp in range(self.ncomp):
            u = coeffs[B.dofs[0] + comp * self.n_scalar]
            vals.append(u @ B.val[0, :, 0])
            grads.append(u @ B.grad[0, :, 0])
        if self.ncomp == 1:
            return {"value": float(vals[0]), "grad": grads[0]}
        grad = np.array(grads)
        return {"value": np.array(vals), "grad": grad, "div": float(np.trace(grad))}

    # ------------------------------------------------------------------
    @cached_property
    def lagrange_coords(self):
        """Coordinates of scalar Lagrange nodes (NaN for non-nodal dofs)."""
        m = self.mesh
        out = np.full((self.n_scalar, 2), np.nan)
        k = self.kind
        if k in (ElementKind.P1, ElementKind.P1Bubble, ElementKind.P2):
            out[:m.n_vertices] = m.vertices
        if k is ElementKind.P2:
            out[m.n_vertices:] = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
        if k is ElementKind.P1dc:
            out[:] = m.vertices[m.triangles].reshape(-1, 2)
        return out

    def interpolate(self, fn):
        """Canonical interpolant of ``fn(x, y)``.

        Scalar spaces expect an array like ``x``; vector spaces (H1 vector or
        H(div)) expect a pair stacked on the first axis.
        """
        m = self.mesh
        k = self.kind
        if self.hdiv:
            P, W = self.element.functionals()
            x = reference_to_physical(m, np.arange(m.n_cells), P)
            v = np.asarray(fn(x[..., 0], x[..., 1]), dtype=float)
            v = np.broadcast_to(v, (2,) + x.shape[:2])
            # pull back: vhat = det J * J^{-1} v
            vhat = np.einsum("cab,bcq->cqa", m.inv_jacobians, v) * m.det_jacobians[:, None, None]
            local = np.einsum("kqa,cqa->ck", W, vhat)
            out = np.zeros(self.ndofs)
            out[self.cell_dofs] = local * self.cell_signs
            return out
        comps = []
        for comp in range(self.ncomp):
            def f(x, y, comp=comp):
                r = np.asarray(fn(x, y), dtype=float)
                if self.ncomp == 2:
                    r = np.broadcast_to(r, (2,) + np.shape(x))[comp]
                return np.broadcast_to(r, np.shape(x))
            comps.append(self._interp_scalar(f))
        return np.concatenate(comps)

    def _interp_scalar(self, f):
        m = self.mesh
        k = self.kind
        out = np.zeros(self.n_scalar)
        if k is ElementKind.P0:
            q = triangle_rule(6)
            x = reference_to_physical(m, np.arange(m.n_cells), q.points)
            out[:] = f(x[..., 0], x[..., 1]) @ q.weights / 0.5
            return out
        if k in (ElementKind.P1, ElementKind.P2, ElementKind.P1dc, ElementKind.P1Bubble):
            c = self.lagrange_coords
            nodal = np.isfinite(c[:, 0])
            out[nodal] = f(c[nodal, 0], c[nodal, 1])
        if k is ElementKind.P1Bubble:
            p = m.vertices[m.triangles]
            cen = p.mean(axis=1)
            vert_mean = out[m.triangles].mean(axis=1)
            out[m.n_vertices:] = f(cen[:, 0], cen[:, 1]) - vert_mean
        return out

    def l2_project(self, fn, degree=None):
        from .assembly import assemble_mass, load_vector
        M = assemble_mass(self, 1.0)
        b = load_vector(self, fn, degree=degree)
        return spla.spsolve(M.tocsc(), b)

    # ------------------------------------------------------------------
    def boundary_dofs(self, tags):
        """Scalar dofs located on boundary edges carrying one of ``tags``."""
        m = self.mesh
        cells, locs, gids, bids = m.boundary_edge_cells(tags)
        k = self.kind
        if k in (ElementKind.P1, ElementKind.P1Bubble, ElementKind.P2):
            d = [m.boundary_edges[bids].ravel()]
            if k is ElementKind.P2:
                d.append(m.n_vertices + gids)
            return np.unique(np.concatenate(d)) if len(bids) else np.zeros(0, dtype=np.int64)
        if k is ElementKind.RT0:
            return np.unique(gids)
        if k is ElementKind.RT1:
            return np.unique(np.concatenate([2 * gids, 2 * gids + 1]))
        raise SpaceError(f"{k.value} has no dofs on the boundary")


def build_space(mesh, kind, vector=False):
    return FunctionSpace(mesh, kind, vector)


def _eval_vector(fn, x, y, t):
    r = np.asarray(fn(x, y, t), dtype=float)
    return np.broadcast_to(r, (2,) + np.shape(x))


def essential_bc_mask(space, tags, value_fn=None, t=0.0, components=None):
    """Constrained dofs on ``tags`` and their prescribed values.

    Lagrange spaces constrain nodal dofs (optionally only some vector
    ``components``); Raviart-Thomas spaces constrain the normal-trace edge
    moments, computed from ``value_fn`` with the global edge normal.

    Returns
    -------
    dofs : int array of global dofs
    values : float array, zeros when ``value_fn`` is None
    """
    tags = {BoundaryTag(tg) for tg in tags}
    missing = tags - space.mesh.tags_present()
    if missing:
        raise SpaceError(f"tags {sorted(x.value for x in missing)} not present on the mesh")
    m = space.mesh
    k = space.kind
    if k in (ElementKind.P0, ElementKind.P1dc):
        raise SpaceError(f"{k.value} has no boundary dof functionals for essential conditions")
    sdofs = space.boundary_dofs(tags)
    if space.hdiv:
        vals = np.zeros(len(sdofs))
        if value_fn is not None and len(sdofs):
            _, _, gids, _ = m.boundary_edge_cells(tags)
            gids = np.unique(gids)
            vals = _rt_edge_moments(space, gids, value_fn, t)
        return sdofs, vals
    comps = range(space.ncomp) if components is None else components
    coords = space.lagrange_coords[sdofs]
    dofs, vals = [], []
    for c in comps:
        dofs.append(sdofs + c * space.n_scalar)
        if value_fn is None:
            vals.append(np.zeros(len(sdofs)))
        elif space.ncomp == 2:
            vals.append(_eval_vector(value_fn, coords[:, 0], coords[:, 1], t)[c].copy())
        else:
            vals.append(np.broadcast_to(np.asarray(value_fn(coords[:, 0], coords[:, 1], t),
                                                   dtype=float), len(sdofs)).copy())
    return np.concatenate(dofs), np.concatenate(vals)


def _rt_edge_moments(space, gids, value_fn, t):
    """Edge moments of g.n with the global normal and orientation."""
    m = space.mesh
    k = space.element.k
    q = edge_rule(2 * k + 4)
    a = m.vertices[m.edges[gids, 0]]
    b = m.vertices[m.edges[gids, 1]]
    tvec = b - a
    length = np.linalg.norm(tvec, axis=1)
    n = np.column_stack([tvec[:, 1], -tvec[:, 0]]) / length[:, None]
    x = a[:, None, :] + q.points[None, :, None] * tvec[:, None, :]
    g = _eval_vector(value_fn, x[..., 0], x[..., 1], t)
    gn = g[0] * n[:, 0, None] + g[1] * n[:, 1, None]
    if k == 0:
        return (gn * q.weights).sum(axis=1) * length
    m0 = (gn * q.weights * (1 - q.points)).sum(axis=1) * length
    m1 = (gn * q.weights * q.points).sum(axis=1) * length
    return np.column_stack([m0, m1]).ravel()


# ---------------------------------------------------------------------------
# interface multiplier space

class MultiplierSpace:
    """Discontinuous P_k on interface edges, the normal-trace space of RT_k.

    Basis per edge in the ``tau_f`` parameter s in [0, 1]: ``1`` for k = 0,
    ``(1 - s, s)`` for k = 1.
    """

    def __init__(self, mesh, degree):
        if degree not in (0, 1):
            raise SpaceError("multiplier degree must be 0 or 1")
        self.mesh = mesh
        self.interface = mesh.interface
        self.degree = degree
        self.nloc = degree + 1
        self.ndofs = len(self.interface) * self.nloc
        self.edge_dofs = np.arange(self.ndofs).reshape(-1, self.nloc)

    def __repr__(self):
        return f"<MultiplierSpace P{self.degree}dc ndofs={self.ndofs}>"

    def eval(self, s):
        s = np.asarray(s, dtype=float)
        if self.degree == 0:
            return np.ones((1,) + s.shape)
        return np.stack([1 - s, s])

    def points(self, s):
        """Physical points on every interface edge, shape (E, nq, 2)."""
        m = self.mesh
        itf = self.interface
        A = m.fluid.vertices[itf.fluid_vertices[:, 0]]
        B = m.fluid.vertices[itf.fluid_vertices[:, 1]]
        return A[:, None, :] + np.asarray(s)[None, :, None] * (B - A)[:, None, :]

    def interpolate(self, fn):
        """L2 projection edge by edge of ``fn(x, y)``."""
        q = edge_rule(6)
        x = self.points(q.points)
        f = np.asarray(fn(x[..., 0], x[..., 1]), dtype=float)
        phi = self.eval(q.points)  # (nloc, nq)
        M = np.einsum("iq,jq,q->ij", phi, phi, q.weights)
        rhs = np.einsum("eq,iq,q->ei", f, phi, q.weights)
        return np.linalg.solve(M, rhs.T).T.ravel()


def interface_ref_points(sub_cells_local, vertices_pair, submesh, s):
    """Reference points in the owning cells for edge parameters ``s``.

    ``vertices_pair`` is (E, 2) giving the interface edge endpoints (A, B)
    in the submesh numbering; the parameter runs A -> B.
    """
    cells, local = sub_cells_local
    tri = submesh.triangles[cells]
    a_loc = LOCAL_EDGES[local, 0]
    va = tri[np.arange(len(cells)), a_loc]
    forward = va == vertices_pair[:, 0]
    s = np.asarray(s, dtype=float)
    sl = np.where(forward[:, None], s[None, :], 1.0 - s[None, :])
    out = np.empty((len(cells), len(s), 2))
    for e in range(3):
        sel = local == e
        if sel.any():
            out[sel] = edge_points(e, sl[sel])
    return out


def boundary_ref_points(submesh, cells, local, s):
    """Reference points for parameter ``s`` along local edges (a -> b)."""
    out = np.empty((len(cells), len(s), 2))
    for e in range(3):
        sel = local == e
        if sel.any():
            out[sel] = edge_points(e, np.broadcast_to(s, (sel.sum(), len(s))))
    return out


# ---------------------------------------------------------------------------
# the six coupled fields

FAMILIES = {
    "lower": dict(u_f=ElementKind.P1Bubble, p_f=ElementKind.P1, u_p=ElementKind.RT0,
                  p_p=ElementKind.P0, eta=ElementKind.P1, lam=0),
    "higher": dict(u_f=ElementKind.P2, p_f=ElementKind.P1, u_p=ElementKind.RT1,
                   p_p=ElementKind.P1dc, eta=ElementKind.P2, lam=1),
}


@dataclass
class CoupledSpaces:
    """Fluid velocity/pressure, Darcy flux/pressure, displacement, multiplier."""

    family: str
    u_f: FunctionSpace
    p_f: FunctionSpace
    u_p: FunctionSpace
    p_p: FunctionSpace
    eta: FunctionSpace
    lam: MultiplierSpace

    def sizes(self):
        return {f: getattr(self, f).ndofs for f in ("u_f", "p_f", "u_p", "p_p", "eta", "lam")}

    @property
    def ndofs(self):
        return sum(self.sizes().values())


def build_coupled_spaces(mesh, family="lower"):
    """Spaces of the ``"lower"`` or ``"higher"`` element family on a CoupledMesh."""
    if family not in FAMILIES:
        raise SpaceError(f"unknown element family {family!r}; expected 'lower' or 'higher'")
    k = FAMILIES[family]
    return CoupledSpaces(
        family=family,
        u_f=FunctionSpace(mesh.fluid, k["u_f"], vector=True),
        p_f=FunctionSpace(mesh.fluid, k["p_f"]),
        u_p=FunctionSpace(mesh.poro, k["u_p"]),
        p_p=FunctionSpace(mesh.poro, k["p_p"]),
        eta=FunctionSpace(mesh.poro, k["eta"], vector=True),
        lam=MultiplierSpace(mesh, k["lam"]),
    )
