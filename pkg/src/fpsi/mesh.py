"""
Two-subdomain triangulations with boundary and interface tagging.

A :class:`CoupledMesh` holds a fluid and a poroelastic :class:`SubMesh`
that meet along a matching interface trace.  Meshes are immutable after
construction; the structured generators produce alternating-diagonal
grids suitable for h-halving convergence sequences.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    """Raised for invalid mesh input or violated mesh invariants."""


class MeshFormatError(MeshError):
    """Malformed mesh file; carries the offending line and column."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f"line {line}"
            if column is not None:
                loc += f", column {column}"
            loc += ": "
        super().__init__(loc + message)
        self.line = line
        self.column = column


class BoundaryTag(enum.Enum):
    GammaF = "GammaF"
    GammaPD = "GammaPD"
    GammaPN = "GammaPN"
    GammaFP = "GammaFP"
    FInlet = "FInlet"
    FOutlet = "FOutlet"
    PInlet = "PInlet"
    POutlet = "POutlet"
    PExt = "PExt"


class Subdomain(enum.Enum):
    Fluid = "fluid"
    Poroelastic = "poro"


# local edge i is opposite local vertex i, traversed counter-clockwise
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


@dataclass(frozen=True, eq=False)
class SubMesh:
    """Conforming triangulation of one subdomain.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counter-clockwise
    boundary_edges : (nb, 2) int array of vertex indices
    boundary_tags : tuple of BoundaryTag, one per boundary edge
    subdomain : Subdomain
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple
    subdomain: Subdomain

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 2)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        b = np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        tags = tuple(BoundaryTag(x) for x in self.boundary_tags)
        for arr in (v, t, b):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "boundary_edges", b)
        object.__setattr__(self, "boundary_tags", tags)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.triangles)

    @cached_property
    def jacobians(self):
        """Affine map x = v0 + J xhat for every cell, shape (nt, 2, 2)."""
        p = self.vertices[self.triangles]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        return J

    @cached_property
    def det_jacobians(self):
        J = self.jacobians
        return J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]

    @cached_property
    def inv_jacobians(self):
        J = self.jacobians
        d = self.det_jacobians
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1] / d
        inv[:, 1, 1] = J[:, 0, 0] / d
        inv[:, 0, 1] = -J[:, 0, 1] / d
        inv[:, 1, 0] = -J[:, 1, 0] / d
        return inv

    @cached_property
    def areas(self):
        return 0.5 * self.det_jacobians

    @cached_property
    def diameters(self):
        p = self.vertices[self.triangles]
        lengths = [np.linalg.norm(p[:, (i + 1) % 3] - p[:, i], axis=1) for i in range(3)]
        return np.max(lengths, axis=0)

    @property
    def h(self):
        return float(self.diameters.max())

    @cached_property
    def _edge_data(self):
        t = self.triangles
        local = np.stack([t[:, LOCAL_EDGES[i]] for i in range(3)], axis=1)  # (nt,3,2)
        sorted_pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(sorted_pairs, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        cell_edges = inverse.reshape(-1, 3)
        # +1 when local orientation (a -> b) agrees with global (min -> max)
        signs = np.where(local[:, :, 0] < local[:, :, 1], 1, -1)
        return edges, cell_edges, signs

    @property
    def edges(self):
        """Unique edges as sorted vertex pairs, shape (ne, 2)."""
        return self._edge_data[0]

    @property
    def cell_edges(self):
        """Global edge index of local edge i for each cell, shape (nt, 3)."""
        return self._edge_data[1]

    @property
    def cell_edge_signs(self):
        return self._edge_data[2]

    @property
    def n_edges(self):
        return len(self.edges)

    @cached_property
    def edge_cells(self):
        """For each edge the list of (cell, local edge) pairs; shape (ne, 2, 2), -1 padded."""
        out = -np.ones((self.n_edges, 2, 2), dtype=np.int64)
        flat = self.cell_edges.ravel()
        count = np.bincount(flat, minlength=self.n_edges)
        order = np.argsort(flat, kind="stable")
        starts = np.concatenate([[0], np.cumsum(count)[:-1]])
        rank = np.arange(len(flat)) - np.repeat(starts, count)
        keep = rank < 2
        sel = order[keep]
        out[flat[sel], rank[keep], 0] = sel // 3
        out[flat[sel], rank[keep], 1] = sel % 3
        return out, count

    @cached_property
    def _boundary_lookup(self):
        """Map sorted boundary vertex pair -> (cell, local edge)."""
        edges = self.edges
        (ec, count) = self.edge_cells
        lookup = {}
        for e in np.nonzero(count == 1)[0]:
            lookup[(int(edges[e, 0]), int(edges[e, 1]))] = (int(ec[e, 0, 0]), int(ec[e, 0, 1]), int(e))
        return lookup

    def boundary_edge_cells(self, tags=None):
        """Cells, local edge indices and global edge ids of (tagged) boundary edges."""
        if tags is not None:
            tags = {BoundaryTag(t) for t in tags}
        cells, locs, gids, bids = [], [], [], []
        lookup = self._boundary_lookup
        for k, (pair, tag) in enumerate(zip(self.boundary_edges, self.boundary_tags)):
            if tags is not None and tag not in tags:
                continue
            key = (int(min(pair)), int(max(pair)))
            if key not in lookup:
                raise MeshError(f"boundary edge {k} {tuple(pair)} is not on the mesh boundary")
            c, l, g = lookup[key]
            cells.append(c)
            locs.append(l)
            gids.append(g)
            bids.append(k)
        return (np.array(cells, dtype=np.int64), np.array(locs, dtype=np.int64),
                np.array(gids, dtype=np.int64), np.array(bids, dtype=np.int64))

    def tags_present(self):
        return set(self.boundary_tags)

    def refine(self):
        nv = self.n_vertices
        mid = 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])
        vertices = np.vstack([self.vertices, mid])
        t = self.triangles
        m = nv + self.cell_edges  # midpoint of edge opposite vertex i
        # children: three corner triangles + the central one, all counter-clockwise
        tris = np.concatenate([
            np.stack([t[:, 0], m[:, 2], m[:, 1]], axis=1),
            np.stack([m[:, 2], t[:, 1], m[:, 0]], axis=1),
            np.stack([m[:, 1], m[:, 0], t[:, 2]], axis=1),
            np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1),
        ])
        edge_index = {(int(a), int(b)): k for k, (a, b) in enumerate(self.edges)}
        bedges, btags = [], []
        for (a, b), tag in zip(self.boundary_edges, self.boundary_tags):
            k = edge_index[(int(min(a, b)), int(max(a, b)))]
            bedges += [(a, nv + k), (nv + k, b)]
            btags += [tag, tag]
        return SubMesh(vertices, tris, np.array(bedges).reshape(-1, 2), tuple(btags), self.subdomain)


@dataclass(frozen=True, eq=False)
class Interface:
    """Matched interface edges, ordered along the tangent ``tau_f``.

    Per edge ``e``: ``fluid_vertices[e]`` and ``poro_vertices[e]`` list the
    endpoints (A, B) in the two vertex numberings with B - A parallel to
    ``tau_f[e]``; ``fluid_cells``/``poro_cells`` are the owning triangles and
    ``fluid_local``/``poro_local`` the local edge index within them.
    """

    fluid_vertices: np.ndarray
    poro_vertices: np.ndarray
    fluid_cells: np.ndarray
    poro_cells: np.ndarray
    fluid_local: np.ndarray
    poro_local: np.ndarray
    n_f: np.ndarray
    n_p: np.ndarray
    tau_f: np.ndarray
    lengths: np.ndarray

    def __len__(self):
        return len(self.fluid_cells)


@dataclass(frozen=True, eq=False)
class CoupledMesh:
    fluid: SubMesh
    poro: SubMesh
    interface: Interface = field(default=None)

    def __post_init__(self):
        if self.interface is None:
            object.__setattr__(self, "interface", build_interface(self.fluid, self.poro))

    @property
    def h(self):
        return max(self.fluid.h, self.poro.h)


def _outward_normal(sub, cell, local):
    a, b = LOCAL_EDGES[local]
    pa = sub.vertices[sub.triangles[cell, a]]
    pb = sub.vertices[sub.triangles[cell, b]]
    t = pb - pa
    n = np.array([t[1], -t[0]])
    return n / np.linalg.norm(n)


def build_interface(fluid, poro, tol=1e-12, pairs=None):
    """Match GammaFP edges of the two submeshes vertex-for-vertex.

    ``pairs`` optionally gives explicit (fluid edge, poro edge) vertex pairs,
    as read from a mesh file; otherwise edges are matched by coordinates.
    Raises :class:`MeshError` when the traces do not coincide.
    """
    fc, fl, _, fb = fluid.boundary_edge_cells([BoundaryTag.GammaFP])
    pc, pl, _, pb = poro.boundary_edge_cells([BoundaryTag.GammaFP])
    scale = max(np.ptp(fluid.vertices, axis=0).max(), np.ptp(poro.vertices, axis=0).max(), 1.0)
    f_edges = fluid.boundary_edges[fb] if len(fb) else np.zeros((0, 2), dtype=np.int64)
    p_edges = poro.boundary_edges[pb] if len(pb) else np.zeros((0, 2), dtype=np.int64)
    if pairs is None:
        if len(f_edges) != len(p_edges):
            raise MeshError(
                f"interface edge count differs: fluid {len(f_edges)}, poro {len(p_edges)}")
        pmid = 0.5 * (poro.vertices[p_edges[:, 0]] + poro.vertices[p_edges[:, 1]])
        pairs = []
        for k, (a, b) in enumerate(f_edges):
            mid = 0.5 * (fluid.vertices[a] + fluid.vertices[b])
            d = np.linalg.norm(pmid - mid, axis=1) if len(pmid) else np.array([np.inf])
            j = int(np.argmin(d))
            if d[j] > tol * scale:
                raise MeshError(f"interface edge {k} of fluid mesh has no matching poro edge "
                                f"(nearest midpoint offset {d[j]:.3e})")
            pairs.append(((a, b), tuple(p_edges[j])))
    fkey = {(int(min(a, b)), int(max(a, b))): i for i, (a, b) in enumerate(f_edges)}
    pkey = {(int(min(a, b)), int(max(a, b))): i for i, (a, b) in enumerate(p_edges)}
    if len(pairs) != len(f_edges) or len(pairs) != len(p_edges):
        raise MeshError("interface records do not cover every GammaFP edge exactly once")
    recs = []
    used_p = set()
    for k, ((fa, fb_), (pa, pb_)) in enumerate(pairs):
        fk = (int(min(fa, fb_)), int(max(fa, fb_)))
        pk = (int(min(pa, pb_)), int(max(pa, pb_)))
        if fk not in fkey:
            raise MeshError(f"interface record {k}: fluid edge {fk} is not a GammaFP edge")
        if pk not in pkey:
            raise MeshError(f"interface record {k}: poro edge {pk} is not a GammaFP edge")
        if pk in used_p:
            raise MeshError(f"interface record {k}: poro edge {pk} matched twice")
        used_p.add(pk)
        xa, xb = fluid.vertices[fa], fluid.vertices[fb_]
        ya, yb = poro.vertices[pa], poro.vertices[pb_]
        if np.linalg.norm(xa - ya) > tol * scale or np.linalg.norm(xb - yb) > tol * scale:
            # allow reversed pairing
            if np.linalg.norm(xa - yb) <= tol * scale and np.linalg.norm(xb - ya) <= tol * scale:
                pa, pb_ = pb_, pa
            else:
                raise MeshError(f"interface record {k}: fluid and poro edge vertices do not "
                                f"coincide (matching-trace violation)")
        i = fkey[fk]
        j = pkey[pk]
        n_f = _outward_normal(fluid, fc[i], fl[i])
        tau = np.array([-n_f[1], n_f[0]])
        # orient endpoints along tau_f
        if np.dot(fluid.vertices[fb_] - fluid.vertices[fa], tau) < 0:
            fa, fb_, pa, pb_ = fb_, fa, pb_, pa
        n_p = _outward_normal(poro, pc[j], pl[j])
        length = float(np.linalg.norm(fluid.vertices[fb_] - fluid.vertices[fa]))
        mid = 0.5 * (fluid.vertices[fa] + fluid.vertices[fb_])
        recs.append((mid[1], mid[0], (fa, fb_), (pa, pb_), fc[i], pc[j], fl[i], pl[j],
                     n_f, n_p, tau, length))
    recs.sort(key=lambda r: (r[0], r[1]))
    if not recs:
        empty = np.zeros((0, 2))
        return Interface(np.zeros((0, 2), dtype=np.int64), np.zeros((0, 2), dtype=np.int64),
                         np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                         np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                         empty, empty, empty, np.zeros(0))
    col = list(zip(*recs))
    return Interface(
        fluid_vertices=np.array(col[2], dtype=np.int64),
        poro_vertices=np.array(col[3], dtype=np.int64),
        fluid_cells=np.array(col[4], dtype=np.int64),
        poro_cells=np.array(col[5], dtype=np.int64),
        fluid_local=np.array(col[6], dtype=np.int64),
        poro_local=np.array(col[7], dtype=np.int64),
        n_f=np.array(col[8]),
        n_p=np.array(col[9]),
        tau_f=np.array(col[10]),
        lengths=np.array(col[11]),
    )


# ---------------------------------------------------------------------------
# structured generation

def _layer(x0, x1, y0, y1, nx, ny, side_tags, subdomain):
    """Alternating-diagonal grid on a rectangle.

    ``side_tags`` maps 'bottom', 'right', 'top', 'left' to BoundaryTag.
    """
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            p00, p10, p01, p11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris += [(p00, p10, p11), (p00, p11, p01)]
            else:
                tris += [(p00, p10, p01), (p10, p11, p01)]
    bedges, btags = [], []
    for i in range(nx):
        bedges.append((vid(i, 0), vid(i + 1, 0)))
        btags.append(side_tags["bottom"])
    for j in range(ny):
        bedges.append((vid(nx, j), vid(nx, j + 1)))
        btags.append(side_tags["right"])
    for i in range(nx, 0, -1):
        bedges.append((vid(i, ny), vid(i - 1, ny)))
        btags.append(side_tags["top"])
    for j in range(ny, 0, -1):
        bedges.append((vid(0, j), vid(0, j - 1)))
        btags.append(side_tags["left"])
    return vertices, np.array(tris), np.array(bedges), btags


def _merge(parts, subdomain):
    verts, tris, bedges, tags = [], [], [], []
    offset = 0
    for v, t, b, g in parts:
        verts.append(v)
        tris.append(t + offset)
        bedges.append(b + offset)
        tags += list(g)
        offset += len(v)
    return SubMesh(np.vstack(verts), np.vstack(tris), np.vstack(bedges), tuple(tags), subdomain)


def build_layered_mesh(x_extent, nx, layers):
    """Stack horizontal rectangular layers into a coupled mesh.

    Parameters
    ----------
    x_extent : (x0, x1)
    nx : int
        Cells in x, shared by every layer so interface traces match.
    layers : list of dict
        Each with keys ``y`` = (y0, y1), ``ny``, ``subdomain`` and
        ``tags`` = side -> BoundaryTag.  Sides shared with a layer of the
        other subdomain must be tagged ``GammaFP``.
    """
    x0, x1 = x_extent
    if nx < 1:
        raise MeshError("nx must be >= 1")
    fluid_parts, poro_parts = [], []
    for lay in layers:
        y0, y1 = lay["y"]
        if lay["ny"] < 1:
            raise MeshError("layer subdivision counts must be >= 1")
        if not y1 > y0:
            raise MeshError(f"empty layer {lay['y']}")
        part = _layer(x0, x1, y0, y1, nx, lay["ny"], lay["tags"], lay["subdomain"])
        (fluid_parts if Subdomain(lay["subdomain"]) is Subdomain.Fluid else poro_parts).append(part)
    fluid = _merge(fluid_parts, Subdomain.Fluid)
    poro = _merge(poro_parts, Subdomain.Poroelastic)
    return CoupledMesh(fluid, poro)


def build_rectangle_coupled_mesh(extents, interface_y, nx, ny_f, ny_p, tags=None):
    """Fluid above / poroelastic below a horizontal interface.

    Parameters
    ----------
    extents : (x0, x1, y0, y1)
    interface_y : float
        Strictly between ``y0`` and ``y1``.
    nx, ny_f, ny_p : int
        Cells in x and in y for each subdomain.
    tags : dict, optional
        ``{'fluid': {side: tag}, 'poro': {side: tag}}`` for the exterior
        sides; defaults to GammaF for the fluid and GammaPD for the
        poroelastic region.
    """
    x0, x1, y0, y1 = extents
    if min(nx, ny_f, ny_p) < 1:
        raise MeshError("subdivision counts must be >= 1")
    if not (y0 < interface_y < y1) or not x1 > x0:
        raise MeshError(f"interface_y={interface_y} outside vertical extents ({y0}, {y1})")
    ftags = {"left": BoundaryTag.GammaF, "right": BoundaryTag.GammaF, "top": BoundaryTag.GammaF}
    ptags = {"left": BoundaryTag.GammaPD, "right": BoundaryTag.GammaPD,
             "bottom": BoundaryTag.GammaPD}
    if tags:
        ftags.update(tags.get("fluid", {}))
        ptags.update(tags.get("poro", {}))
    ftags["bottom"] = BoundaryTag.GammaFP
    ptags["top"] = BoundaryTag.GammaFP
    return build_layered_mesh((x0, x1), nx, [
        dict(y=(y0, interface_y), ny=ny_p, subdomain=Subdomain.Poroelastic, tags=ptags),
        dict(y=(interface_y, y1), ny=ny_f, subdomain=Subdomain.Fluid, tags=ftags),
    ])


def build_channel_mesh(length, radius, wall, nx, ny_f, ny_wall):
    """Fluid channel (0,L)x(-R,R) between two poroelastic wall strips."""
    R, rp = radius, wall
    T = BoundaryTag
    return build_layered_mesh((0.0, length), nx, [
        dict(y=(-R - rp, -R), ny=ny_wall, subdomain=Subdomain.Poroelastic,
             tags=dict(bottom=T.PExt, right=T.POutlet, top=T.GammaFP, left=T.PInlet)),
        dict(y=(-R, R), ny=ny_f, subdomain=Subdomain.Fluid,
             tags=dict(bottom=T.GammaFP, right=T.FOutlet, top=T.GammaFP, left=T.FInlet)),
        dict(y=(R, R + rp), ny=ny_wall, subdomain=Subdomain.Poroelastic,
             tags=dict(bottom=T.GammaFP, right=T.POutlet, top=T.PExt, left=T.PInlet)),
    ])


def uniform_refine(mesh):
    """Split every triangle into four similar children; tags are inherited."""
    return CoupledMesh(mesh.fluid.refine(), mesh.poro.refine())


# ---------------------------------------------------------------------------
# validation

def _validate_submesh(sub, name):
    out = []
    v, t = sub.vertices, sub.triangles
    if not np.all(np.isfinite(v)):
        out.append(f"{name}: non-finite vertex coordinates")
    if len(t) and (t.min() < 0 or t.max() >= len(v)):
        out.append(f"{name}: triangle references a vertex index out of range")
        return out
    for c in np.nonzero(sub.det_jacobians <= 0)[0]:
        out.append(f"{name}: triangle {c} is not positively oriented (orientation)")
    _, count = sub.edge_cells
    for e in np.nonzero(count > 2)[0]:
        out.append(f"{name}: edge {tuple(sub.edges[e])} shared by {count[e]} triangles (conformity)")
    bset = {tuple(sub.edges[e]) for e in np.nonzero(count == 1)[0]}
    seen = {}
    for k, (a, b) in enumerate(sub.boundary_edges):
        key = (int(min(a, b)), int(max(a, b)))
        if key not in bset:
            out.append(f"{name}: tagged edge {k} {key} is not a boundary edge")
        if key in seen:
            out.append(f"{name}: boundary edge {key} tagged more than once")
        seen[key] = k
    for key in sorted(bset - set(seen)):
        out.append(f"{name}: boundary edge {key} carries no tag")
    if len(sub.diameters) and sub.diameters.min() <= 0:
        out.append(f"{name}: zero element diameter")
    return out


def validate(mesh):
    """Return a list of human-readable invariant violations (empty if valid)."""
    out = _validate_submesh(mesh.fluid, "fluid") + _validate_submesh(mesh.poro, "poro")
    if out:
        return out
    try:
        itf = build_interface(mesh.fluid, mesh.poro) if mesh.interface is None else mesh.interface
    except MeshError as exc:
        return [f"interface: {exc}"]
    for e in range(len(itf)):
        if abs(np.linalg.norm(itf.n_f[e]) - 1) > 1e-14 or np.abs(itf.n_f[e] + itf.n_p[e]).max() > 1e-14:
            out.append(f"interface edge {e}: normals not opposite unit vectors")
        if abs(np.dot(itf.n_f[e], itf.tau_f[e])) > 1e-14:
            out.append(f"interface edge {e}: tangent not orthogonal to normal")
        fa, fb = itf.fluid_vertices[e]
        pa, pb = itf.poro_vertices[e]
        if (np.any(mesh.fluid.vertices[fa] != mesh.poro.vertices[pa])
                or np.any(mesh.fluid.vertices[fb] != mesh.poro.vertices[pb])):
            out.append(f"interface edge {e}: vertices do not coincide (matching-trace)")
    return out


# ---------------------------------------------------------------------------
# file I/O

HEADER = "fpsi-mesh v1"


def write_mesh(mesh, path):
    lines = [HEADER]
    for name, sub in (("fluid", mesh.fluid), ("poro", mesh.poro)):
        lines.append(f"submesh {name}")
        lines.append(f"vertices {sub.n_vertices}")
        lines += [f"{x:.17g} {y:.17g}" for x, y in sub.vertices]
        lines.append(f"triangles {sub.n_cells}")
        lines += [f"{i} {j} {k}" for i, j, k in sub.triangles]
        lines.append(f"bedges {len(sub.boundary_edges)}")
        lines += [f"{i} {j} {tag.value}" for (i, j), tag in zip(sub.boundary_edges, sub.boundary_tags)]
    itf = mesh.interface
    lines.append(f"interface {len(itf)}")
    lines += [f"{fa} {fb} {pa} {pb}" for (fa, fb), (pa, pb)
              in zip(itf.fluid_vertices, itf.poro_vertices)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


class _Reader:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self):
        while self.pos < len(self.lines):
            self.pos += 1
            s = self.lines[self.pos - 1].strip()
            if s and not s.startswith("#"):
                return s.split()
        raise MeshFormatError("unexpected end of file", self.pos)

    def err(self, msg, column=None):
        return MeshFormatError(msg, self.pos, column)

    def section(self, keyword):
        tok = self.next()
        if len(tok) != 2 or tok[0] != keyword:
            raise self.err(f"expected '{keyword} <count>', got '{' '.join(tok)}'", 1)
        try:
            n = int(tok[1])
        except ValueError:
            raise self.err(f"invalid count '{tok[1]}'", 2) from None
        if n < 0:
            raise self.err("negative count", 2)
        return n

    def row(self, n, conv):
        tok = self.next()
        if len(tok) != len(conv):
            raise self.err(f"expected {len(conv)} fields, got {len(tok)}", min(len(tok), len(conv)) + 1)
        vals = []
        for col, (s, f) in enumerate(zip(tok, conv), start=1):
            try:
                vals.append(f(s))
            except (ValueError, KeyError):
                raise self.err(f"cannot parse field '{s}'", col) from None
        return vals


def read_mesh(path):
    """Read the ASCII ``fpsi-mesh v1`` format and validate the result."""
    with open(path) as fh:
        r = _Reader(fh.read())
    tok = r.next()
    if " ".join(tok) != HEADER:
        raise r.err(f"bad header, expected '{HEADER}'", 1)
    subs = {}
    for name in ("fluid", "poro"):
        tok = r.next()
        if tok != ["submesh", name]:
            raise r.err(f"expected 'submesh {name}'", 1)
        nv = r.section("vertices")
        verts = [r.row(2, (float, float)) for _ in range(nv)]
        for k, (x, y) in enumerate(verts):
            if not (np.isfinite(x) and np.isfinite(y)):
                raise MeshFormatError(f"non-finite coordinate in vertex {k}")
        nt = r.section("triangles")
        tris = [r.row(3, (int, int, int)) for _ in range(nt)]
        nb = r.section("bedges")
        bed = [r.row(3, (int, int, BoundaryTag)) for _ in range(nb)]
        for k, tri in enumerate(tris):
            if min(tri) < 0 or max(tri) >= nv:
                raise MeshFormatError(f"{name} triangle {k} references vertex out of range")
        for k, (a, b, _) in enumerate(bed):
            if min(a, b) < 0 or max(a, b) >= nv:
                raise MeshFormatError(f"{name} boundary edge {k} references vertex out of range")
        subs[name] = SubMesh(
            np.array(verts, dtype=float).reshape(-1, 2),
            np.array(tris, dtype=np.int64).reshape(-1, 3),
            np.array([b[:2] for b in bed], dtype=np.int64).reshape(-1, 2),
            tuple(b[2] for b in bed),
            Subdomain.Fluid if name == "fluid" else Subdomain.Poroelastic,
        )
    ne = r.section("interface")
    pairs = [r.row(4, (int,) * 4) for _ in range(ne)]
    for name, sub in subs.items():
        bad = _validate_submesh(sub, name)
        if bad:
            raise MeshError("; ".join(bad))
    interface = build_interface(subs["fluid"], subs["poro"],
                                pairs=[((a, b), (c, d)) for a, b, c, d in pairs])
    mesh = CoupledMesh(subs["fluid"], subs["poro"], interface)
    bad = validate(mesh)
    if bad:
        raise MeshError("; ".join(bad))
    return mesh
