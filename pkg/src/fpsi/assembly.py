"""
Assembly of the bilinear and linear forms of the coupled Navier-Stokes /
Biot problem and composition of the per-step block system.

All matrices are ``scipy.sparse.csr_matrix``.  Row index = test function,
column index = trial function.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .elements import LOCAL_EDGES
from .quadrature import clamp_degree, edge_rule, triangle_rule
from .spaces import boundary_ref_points, interface_ref_points

FIELDS = ("u_f", "p_f", "u_p", "p_p", "eta", "lam")


# ---------------------------------------------------------------------------
# coefficients and data

@dataclass
class ProblemCoefficients:
    rho_f: float = 1.0
    mu_f: float = 1.0
    rho_p: float = 1.0
    lambda_p: float = 1.0
    mu_p: float = 1.0
    alpha: float = 1.0
    s0: float = 1.0
    K: object = 1.0
    alpha_bjs: float = 1.0
    xi: float = 0.0

    def __post_init__(self):
        for name in ("mu_f", "rho_f", "rho_p", "mu_p"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lambda_p < 0 or self.s0 < 0 or self.xi < 0 or self.alpha_bjs < 0:
            raise ValueError("lambda_p, s0, xi and alpha_bjs must be non-negative")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not callable(self.K):
            K = np.asarray(self.K, dtype=float)
            if K.ndim == 0:
                K = K * np.eye(2)
            if K.shape != (2, 2) or not np.allclose(K, K.T):
                raise ValueError("K must be a symmetric 2x2 tensor")
            if np.linalg.eigvalsh(K).min() <= 0:
                raise ValueError("K must be positive definite")
            self.K = K

    def K_at(self, x, y):
        """Permeability at points, shape x.shape + (2, 2)."""
        if callable(self.K):
            return np.asarray(self.K(x, y), dtype=float)
        return np.broadcast_to(self.K, np.shape(x) + (2, 2))

    def k_bounds(self):
        """(k_min, k_max) of a constant tensor."""
        if callable(self.K):
            raise ValueError("k_bounds needs a constant permeability; pass bounds explicitly")
        ev = np.linalg.eigvalsh(self.K)
        return float(ev[0]), float(ev[-1])


def _zero(x, y, t):
    return np.zeros_like(x)


@dataclass
class EssentialBC:
    """Strongly imposed data ``value(x, y, t)`` on ``tags`` of ``field``."""

    field: str
    tags: tuple
    value: Optional[Callable] = None
    components: Optional[tuple] = None


@dataclass
class SourceFunctions:
    """Volume sources and boundary data; all callables take (x, y, t).

    Vector-valued callables return a pair stacked on the first axis.
    ``fluid_traction`` maps tags to sigma_f n data; ``darcy_pressure`` maps
    tags to Darcy pressure imposed naturally.
    """

    f_f: Optional[Callable] = None
    f_p: Optional[Callable] = None
    q_p: Optional[Callable] = None
    q_f: Optional[Callable] = None
    fluid_traction: dict = field(default_factory=dict)
    darcy_pressure: dict = field(default_factory=dict)
    essential: list = field(default_factory=list)


@dataclass
class BlockSystem:
    """Saddle-point system with named field blocks."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    offsets: dict

    def block(self, name):
        return slice(self.offsets[name], self.offsets[name] + self.sizes[name])

    @property
    def sizes(self):
        names = list(self.offsets)
        ends = [self.offsets[n] for n in names[1:]] + [self.matrix.shape[0]]
        return {n: e - self.offsets[n] for n, e in zip(names, ends)}


# ---------------------------------------------------------------------------
# helpers

def _scatter(rows, cols, local, shape):
    nc, ni, nj = local.shape
    R = np.broadcast_to(rows[:, :, None], (nc, ni, nj))
    C = np.broadcast_to(cols[:, None, :], (nc, ni, nj))
    return sp.coo_matrix((local.ravel(), (R.ravel(), C.ravel())), shape=shape).tocsr()


def _volume(space, degree):
    q = triangle_rule(clamp_degree(degree))
    B = space.evaluate(None, q.points)
    w = space.mesh.det_jacobians[:, None] * q.weights[None, :]
    return B, w


def _vector_dofs(space, B):
    if space.ncomp == 2:
        return np.concatenate([B.dofs, B.dofs + space.n_scalar], axis=1)
    return B.dofs


def _block2(blocks):
    """Assemble [[b00, b01], [b10, b11]] local arrays into (nc, 2n, 2n)."""
    top = np.concatenate([blocks[0][0], blocks[0][1]], axis=2)
    bot = np.concatenate([blocks[1][0], blocks[1][1]], axis=2)
    return np.concatenate([top, bot], axis=1)


def _callable_values(fn, x, y, t, vector):
    if fn is None:
        return np.zeros((2,) + x.shape) if vector else np.zeros(x.shape)
    r = np.asarray(fn(x, y, t), dtype=float)
    return np.broadcast_to(r, ((2,) if vector else ()) + x.shape)


# ---------------------------------------------------------------------------
# bilinear forms

def assemble_mass(space, density=1.0, degree=None):
    """Mass matrix (density * phi_j, phi_i)."""
    deg = degree if degree is not None else 2 * space.degree
    B, w = _volume(space, deg)
    if space.hdiv:
        loc = np.einsum("ciqa,cjqa,cq->cij", B.val, B.val, w)
    else:
        loc = np.einsum("ciq,cjq,cq->cij", B.val, B.val, w)
        if space.ncomp == 2:
            z = np.zeros_like(loc)
            loc = _block2([[loc, z], [z, loc]])
    dofs = _vector_dofs(space, B)
    return _scatter(dofs, dofs, density * loc, (space.ndofs, space.ndofs))


def _grad_products(space, degree=None):
    deg = degree if degree is not None else 2 * space.degree + 1
    B, w = _volume(space, deg)
    D = np.einsum("ciqa,cjqb,cq->cijab", B.grad, B.grad, w)
    return B, w, D


def assemble_af(space, mu_f=1.0):
    """(2 mu_f D(u), D(v)) on a two-component H1 space."""
    B, w, D = _grad_products(space)
    lap = D[..., 0, 0] + D[..., 1, 1]
    blocks = [[mu_f * ((a == b) * lap + D[..., b, a]) for b in range(2)] for a in range(2)]
    dofs = _vector_dofs(space, B)
    return _scatter(dofs, dofs, _block2(blocks), (space.ndofs, space.ndofs))


def assemble_ape(space, mu_p=1.0, lambda_p=1.0, xi=0.0):
    """(2 mu_p D(eta), D(xi)) + (lambda_p div eta, div xi) + (xi_spring eta, xi)."""
    B, w, D = _grad_products(space)
    lap = D[..., 0, 0] + D[..., 1, 1]
    blocks = [[mu_p * ((a == b) * lap + D[..., b, a]) + lambda_p * D[..., a, b]
               for b in range(2)] for a in range(2)]
    dofs = _vector_dofs(space, B)
    A = _scatter(dofs, dofs, _block2(blocks), (space.ndofs, space.ndofs))
    if xi:
        A = A + assemble_mass(space, xi)
    return A


def assemble_apd(space, mu_f=1.0, K=1.0, coefficients=None):
    """(mu_f K^{-1} u_p, v_p) on an H(div) space."""
    deg = 2 * space.degree + 1
    B, w = _volume(space, deg)
    if coefficients is not None:
        Kq = coefficients.K_at(B.x[..., 0], B.x[..., 1])
        mu_f = coefficients.mu_f
    else:
        K = np.asarray(K, dtype=float)
        K = K * np.eye(2) if K.ndim == 0 else K
        Kq = np.broadcast_to(K, B.x.shape[:2] + (2, 2))
    det = Kq[..., 0, 0] * Kq[..., 1, 1] - Kq[..., 0, 1] * Kq[..., 1, 0]
    if np.any(det <= 0) or np.any(Kq[..., 0, 0] <= 0):
        raise ValueError("permeability tensor is singular or indefinite at a quadrature point")
    Kinv = np.linalg.inv(Kq)
    loc = mu_f * np.einsum("ciqa,cqab,cjqb,cq->cij", B.val, Kinv, B.val, w)
    return _scatter(B.dofs, B.dofs, loc, (space.ndofs, space.ndofs))


def _divergence(space, B):
    """(nc, nloc_total, nq) divergence of every local vector basis function."""
    if space.hdiv:
        return B.div
    return np.concatenate([B.grad[..., 0], B.grad[..., 1]], axis=1)


def assemble_b(vspace, wspace, degree=None):
    """b(v, w) = -(div v, w); returned with rows = w dofs, cols = v dofs."""
    if vspace.mesh is not wspace.mesh:
        raise ValueError("b-form spaces must live on the same submesh")
    deg = degree if degree is not None else vspace.degree + wspace.degree
    q = triangle_rule(clamp_degree(deg))
    Bv = vspace.evaluate(None, q.points)
    Bw = wspace.evaluate(None, q.points, derivatives=False)
    w = vspace.mesh.det_jacobians[:, None] * q.weights[None, :]
    div = _divergence(vspace, Bv)
    loc = -np.einsum("ciq,cjq,cq->cij", Bw.val, div, w)
    return _scatter(Bw.dofs, _vector_dofs(vspace, Bv), loc, (wspace.ndofs, vspace.ndofs))


def assemble_convection(space, w_prev, rho_f=1.0):
    """(rho_f (w . grad) u, v) with w a lagged coefficient vector of ``space``."""
    w_prev = np.asarray(w_prev, dtype=float)
    if w_prev.shape != (space.ndofs,):
        raise ValueError(f"w_prev has shape {w_prev.shape}, expected ({space.ndofs},)")
    deg = 3 * space.degree - 1
    B, w = _volume(space, deg)
    wq = np.stack([np.einsum("ck,ckq->cq", w_prev[B.dofs + a * space.n_scalar], B.val)
                   for a in range(2)], axis=-1)
    adv = np.einsum("cqa,cjqa->cjq", wq, B.grad)
    loc = rho_f * np.einsum("ciq,cjq,cq->cij", B.val, adv, w)
    z = np.zeros_like(loc)
    dofs = _vector_dofs(space, B)
    return _scatter(dofs, dofs, _block2([[loc, z], [z, loc]]), (space.ndofs, space.ndofs))


# ---------------------------------------------------------------------------
# interface forms

def _interface_traces(space, submesh_side, mesh, s):
    """Vector basis traces on interface edges: (E, nloc_total, nq, 2)."""
    itf = mesh.interface
    if submesh_side == "fluid":
        sub, cells, local, verts = mesh.fluid, itf.fluid_cells, itf.fluid_local, itf.fluid_vertices
    else:
        sub, cells, local, verts = mesh.poro, itf.poro_cells, itf.poro_local, itf.poro_vertices
    ref = interface_ref_points((cells, local), verts, sub, s)
    B = space.evaluate(cells, ref, derivatives=False)
    if space.hdiv:
        return B.val, B.dofs, B.x
    z = np.zeros_like(B.val)
    vals = np.concatenate([np.stack([B.val, z], axis=-1), np.stack([z, B.val], axis=-1)], axis=1)
    return vals, _vector_dofs(space, B), B.x


def assemble_bjs(fspace, espace, mesh, coefficients, degree=None):
    """Blocks of sum_e <c (u_f - eta).tau, (v_f - xi).tau>, c = mu_f alpha_BJS K_tau^{-1/2}.

    Returns dict with keys 'ff', 'fe', 'ef', 'ee' (row field first).
    """
    itf = mesh.interface
    deg = degree if degree is not None else fspace.degree + espace.degree
    q = edge_rule(clamp_degree(deg))
    Tf, df, x = _interface_traces(fspace, "fluid", mesh, q.points)
    Te, de, _ = _interface_traces(espace, "poro", mesh, q.points)
    tau = itf.tau_f
    Kq = coefficients.K_at(x[..., 0], x[..., 1])
    Kt = np.einsum("ea,eqab,eb->eq", tau, Kq, tau)
    if np.any(Kt <= 0):
        raise ValueError("tangential permeability K_j must be positive")
    c = coefficients.mu_f * coefficients.alpha_bjs / np.sqrt(Kt)
    w = c * q.weights[None, :] * itf.lengths[:, None]
    tf = np.einsum("eiqa,ea->eiq", Tf, tau)
    te = np.einsum("eiqa,ea->eiq", Te, tau)
    nf, ne_ = fspace.ndofs, espace.ndofs
    return {
        "ff": _scatter(df, df, np.einsum("eiq,ejq,eq->eij", tf, tf, w), (nf, nf)),
        "fe": _scatter(df, de, -np.einsum("eiq,ejq,eq->eij", tf, te, w), (nf, ne_)),
        "ef": _scatter(de, df, -np.einsum("eiq,ejq,eq->eij", te, tf, w), (ne_, nf)),
        "ee": _scatter(de, de, np.einsum("eiq,ejq,eq->eij", te, te, w), (ne_, ne_)),
    }


def assemble_bgamma(fspace, dspace, espace, lspace, mesh, degree=None):
    """Coupling <v_f.n_f + (xi + v_p).n_p, mu> split per field.

    Returns (B_f, B_p, B_e), each with rows = multiplier dofs.
    """
    if lspace.degree != dspace.element.k:
        raise ValueError("multiplier space does not match the Darcy normal-trace space")
    itf = mesh.interface
    deg = degree if degree is not None else max(fspace.degree, espace.degree, dspace.degree) + lspace.degree
    q = edge_rule(clamp_degree(deg))
    mu = lspace.eval(q.points)  # (nloc, nq)
    w = q.weights[None, :] * itf.lengths[:, None]
    out = []
    for space, side, normal in ((fspace, "fluid", itf.n_f), (dspace, "poro", itf.n_p),
                                (espace, "poro", itf.n_p)):
        T, dofs, _ = _interface_traces(space, side, mesh, q.points)
        tn = np.einsum("ejqa,ea->ejq", T, normal)
        loc = np.einsum("iq,ejq,eq->eij", mu, tn, w)
        out.append(_scatter(lspace.edge_dofs, dofs, loc, (lspace.ndofs, space.ndofs)))
    return tuple(out)


def assemble_multiplier_mass(lspace):
    q = edge_rule(2 * lspace.degree + 1)
    mu = lspace.eval(q.points)
    w = q.weights[None, :] * lspace.interface.lengths[:, None]
    loc = np.einsum("iq,jq,eq->eij", mu, mu, w)
    return _scatter(lspace.edge_dofs, lspace.edge_dofs, loc, (lspace.ndofs, lspace.ndofs))


def assemble_h1_inner(space):
    """(u, v) + (grad u, grad v) on a scalar or two-component H1 space."""
    B, w, D = _grad_products(space, 2 * space.degree)
    lap = D[..., 0, 0] + D[..., 1, 1]
    mass = np.einsum("ciq,cjq,cq->cij", B.val, B.val, w)
    loc = lap + mass
    if space.ncomp == 2:
        z = np.zeros_like(loc)
        loc = _block2([[loc, z], [z, loc]])
    dofs = _vector_dofs(space, B)
    return _scatter(dofs, dofs, loc, (space.ndofs, space.ndofs))


def assemble_hdiv_inner(space):
    """(u, v) + (div u, div v) on an H(div) space."""
    B, w = _volume(space, 2 * space.degree)
    loc = np.einsum("ciqa,cjqa,cq->cij", B.val, B.val, w) + np.einsum("ciq,cjq,cq->cij", B.div, B.div, w)
    return _scatter(B.dofs, B.dofs, loc, (space.ndofs, space.ndofs))


# ---------------------------------------------------------------------------
# linear forms

def load_vector(space, fn, t=None, degree=None):
    """(f, v) for ``fn(x, y)`` (or ``fn(x, y, t)`` when ``t`` is given)."""
    deg = degree if degree is not None else space.degree + 4
    B, w = _volume(space, deg)
    x, y = B.x[..., 0], B.x[..., 1]
    vector = space.ncomp == 2 or space.hdiv
    if fn is None:
        return np.zeros(space.ndofs)
    f = np.asarray(fn(x, y) if t is None else fn(x, y, t), dtype=float)
    f = np.broadcast_to(f, ((2,) if vector else ()) + x.shape)
    out = np.zeros(space.ndofs)
    if space.hdiv:
        np.add.at(out, B.dofs, np.einsum("ciqa,acq,cq->ci", B.val, f, w))
    elif space.ncomp == 2:
        for a in range(2):
            np.add.at(out, B.dofs + a * space.n_scalar, np.einsum("ciq,cq,cq->ci", B.val, f[a], w))
    else:
        np.add.at(out, B.dofs, np.einsum("ciq,cq,cq->ci", B.val, f, w))
    return out


def _boundary_basis(space, tags, degree):
    m = space.mesh
    cells, local, _, _ = m.boundary_edge_cells(tags)
    q = edge_rule(clamp_degree(degree))
    ref = boundary_ref_points(m, cells, local, q.points)
    B = space.evaluate(cells, ref, derivatives=False)
    tri = m.triangles[cells]
    pa = m.vertices[tri[np.arange(len(cells)), LOCAL_EDGES[local, 0]]]
    pb = m.vertices[tri[np.arange(len(cells)), LOCAL_EDGES[local, 1]]]
    t = pb - pa
    length = np.linalg.norm(t, axis=1)
    n = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
    w = q.weights[None, :] * length[:, None]
    return B, w, n


def boundary_traction_load(space, tags, fn, t):
    """<g, v> over boundary edges with ``g = fn(x, y, t)`` a vector field.

    ``fn`` may instead accept an extra normal argument: ``fn(x, y, t, n)``.
    """
    out = np.zeros(space.ndofs)
    if not tags:
        return out
    B, w, n = _boundary_basis(space, tags, space.degree + 4)
    if len(B.cells) == 0:
        return out
    x, y = B.x[..., 0], B.x[..., 1]
    try:
        g = np.asarray(fn(x, y, t, np.broadcast_to(n[:, None, :], x.shape + (2,))), dtype=float)
    except TypeError:
        g = np.asarray(fn(x, y, t), dtype=float)
    g = np.broadcast_to(g, (2,) + x.shape)
    for a in range(2):
        np.add.at(out, B.dofs + a * space.n_scalar, np.einsum("ciq,cq,cq->ci", B.val, g[a], w))
    return out


def darcy_pressure_load(space, tags, fn, t):
    """-<p, v.n> over boundary edges (natural Darcy pressure data)."""
    out = np.zeros(space.ndofs)
    if not tags:
        return out
    B, w, n = _boundary_basis(space, tags, space.degree + 4)
    if len(B.cells) == 0:
        return out
    p = np.broadcast_to(np.asarray(fn(B.x[..., 0], B.x[..., 1], t), dtype=float), B.x.shape[:2])
    vn = np.einsum("ciqa,ca->ciq", B.val, n)
    np.add.at(out, B.dofs, -np.einsum("ciq,cq,cq->ci", vn, p, w))
    return out


def assemble_rhs(sources, spaces, t):
    """Per-field load vectors of the data at time ``t``.

    Returns a dict keyed by field name with body forces, sources and
    natural boundary terms; the multiplier entry is zero.
    """
    def timed(fn):
        return None if fn is None else (lambda x, y, fn=fn: fn(x, y, t))

    out = {
        "u_f": load_vector(spaces.u_f, timed(sources.f_f)),
        "p_f": load_vector(spaces.p_f, timed(sources.q_f)),
        "u_p": np.zeros(spaces.u_p.ndofs),
        "p_p": load_vector(spaces.p_p, timed(sources.q_p)),
        "eta": load_vector(spaces.eta, timed(sources.f_p)),
        "lam": np.zeros(spaces.lam.ndofs),
    }
    for tag, fn in sources.fluid_traction.items():
        out["u_f"] += boundary_traction_load(spaces.u_f, [tag], fn, t)
    for tag, fn in sources.darcy_pressure.items():
        out["u_p"] += darcy_pressure_load(spaces.u_p, [tag], fn, t)
    return out


# ---------------------------------------------------------------------------
# composition

@dataclass
class StaticBlocks:
    """Time-independent blocks of the coupled problem."""

    M_f: sp.csr_matrix
    M_s: sp.csr_matrix
    M_p: sp.csr_matrix
    A_f: sp.csr_matrix
    A_e: sp.csr_matrix
    A_d: sp.csr_matrix
    B_f: sp.csr_matrix
    B_p: sp.csr_matrix
    B_pe: sp.csr_matrix
    bjs: dict
    G_f: sp.csr_matrix
    G_p: sp.csr_matrix
    G_e: sp.csr_matrix
    M_lam: sp.csr_matrix


def assemble_static_blocks(spaces, mesh, coefficients):
    c = coefficients
    G_f, G_p, G_e = assemble_bgamma(spaces.u_f, spaces.u_p, spaces.eta, spaces.lam, mesh)
    return StaticBlocks(
        M_f=assemble_mass(spaces.u_f),
        M_s=assemble_mass(spaces.eta),
        M_p=assemble_mass(spaces.p_p),
        A_f=assemble_af(spaces.u_f, c.mu_f),
        A_e=assemble_ape(spaces.eta, c.mu_p, c.lambda_p, c.xi),
        A_d=assemble_apd(spaces.u_p, coefficients=c),
        B_f=assemble_b(spaces.u_f, spaces.p_f),
        B_p=assemble_b(spaces.u_p, spaces.p_p),
        B_pe=assemble_b(spaces.eta, spaces.p_p),
        bjs=assemble_bjs(spaces.u_f, spaces.eta, mesh, c),
        G_f=G_f, G_p=G_p, G_e=G_e,
        M_lam=assemble_multiplier_mass(spaces.lam),
    )


def field_offsets(spaces):
    off, pos = {}, 0
    for name in FIELDS:
        off[name] = pos
        pos += getattr(spaces, name).ndofs
    return off


def compose_step_system(blocks, coefficients, dt, spaces, convection=None, loads=None,
                        u_f_prev=None, eta_prev=None, eta_prev2=None, p_p_prev=None):
    """Backward-Euler system for one step of the coupled scheme.

    Unknown order (u_f, p_f, u_p, p_p, eta, lam) at t_{n+1}.  Previous
    values default to zero; ``loads`` is the output of :func:`assemble_rhs`.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    b, c = blocks, coefficients
    n = {f: getattr(spaces, f).ndofs for f in FIELDS}
    checks = [(b.M_f, "u_f", "u_f"), (b.B_f, "p_f", "u_f"), (b.A_d, "u_p", "u_p"),
              (b.B_p, "p_p", "u_p"), (b.M_s, "eta", "eta"), (b.G_f, "lam", "u_f"),
              (b.G_p, "lam", "u_p"), (b.G_e, "lam", "eta"), (b.B_pe, "p_p", "eta")]
    for mat, r, col in checks:
        if mat.shape != (n[r], n[col]):
            raise ValueError(f"block ({r}, {col}) has shape {mat.shape}, expected {(n[r], n[col])}")
    N = convection if convection is not None else sp.csr_matrix((n["u_f"], n["u_f"]))
    S = b.bjs
    K_ff = (c.rho_f / dt) * b.M_f + b.A_f + N + S["ff"]
    K_ee = (c.rho_p / dt ** 2) * b.M_s + b.A_e + S["ee"] / dt
    K_pp = (c.s0 / dt) * b.M_p
    rows = [
        [K_ff, b.B_f.T, None, None, S["fe"] / dt, b.G_f.T],
        [-b.B_f, None, None, None, None, None],
        [None, None, b.A_d, b.B_p.T, None, b.G_p.T],
        [None, None, -b.B_p, K_pp, -(c.alpha / dt) * b.B_pe, None],
        [S["ef"], None, None, c.alpha * b.B_pe.T, K_ee, b.G_e.T],
        [b.G_f, None, b.G_p, None, b.G_e / dt, None],
    ]
    # keep every diagonal block present so sizes are well defined
    for i, f in enumerate(FIELDS):
        if rows[i][i] is None:
            rows[i][i] = sp.csr_matrix((n[f], n[f]))
    A = sp.bmat(rows, format="csr")

    zero = {f: np.zeros(n[f]) for f in FIELDS}
    L = dict(zero, **(loads or {}))
    u0 = zero["u_f"] if u_f_prev is None else u_f_prev
    e0 = zero["eta"] if eta_prev is None else eta_prev
    e1 = zero["eta"] if eta_prev2 is None else eta_prev2
    p0 = zero["p_p"] if p_p_prev is None else p_p_prev
    rhs = {
        "u_f": L["u_f"] + (c.rho_f / dt) * (b.M_f @ u0) + (S["fe"] @ e0) / dt,
        "p_f": L["p_f"],
        "u_p": L["u_p"],
        "p_p": L["p_p"] + (c.s0 / dt) * (b.M_p @ p0) - (c.alpha / dt) * (b.B_pe @ e0),
        "eta": L["eta"] + (c.rho_p / dt ** 2) * (b.M_s @ (2 * e0 - e1)) + (S["ee"] @ e0) / dt,
        "lam": L["lam"] + (b.G_e @ e0) / dt,
    }
    return BlockSystem(A, np.concatenate([rhs[f] for f in FIELDS]), field_offsets(spaces))


def apply_essential(system, dofs, values):
    """Eliminate constrained rows and columns; returns a new BlockSystem.

    Known values move to the right-hand side through the eliminated
    columns; constrained rows become identity rows carrying the value.
    """
    A = system.matrix
    n = A.shape[0]
    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    g = np.zeros(n)
    g[dofs] = values
    rhs = system.rhs - A @ g
    keep = np.ones(n)
    keep[dofs] = 0.0
    Dk = sp.diags(keep)
    A2 = (Dk @ A @ Dk + sp.diags(1.0 - keep)).tocsr()
    A2.eliminate_zeros()
    rhs[dofs] = values
    return BlockSystem(A2, rhs, system.offsets)
