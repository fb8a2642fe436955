"""
Pulsatile flow in a straight channel bounded by two thin poroelastic walls.

Blood enters at x = 0 under a raised-cosine pressure pulse and leaves
freely at x = L.  The walls are clamped at both ends, slide-free on their
outer faces (x-displacement fixed, normal stress free) and drained there.
A spring term ``xi * eta`` models the circumferential recoil of a vessel.
"""
from dataclasses import asdict, dataclass, field
import logging
import math
import os

import numpy as np

from .assembly import EssentialBC, ProblemCoefficients, SourceFunctions
from .mesh import BoundaryTag, build_channel_mesh
from .spaces import interface_ref_points
from .stepper import CoupledProblem, SolverConfig, Stepper, TimeState

log = logging.getLogger(__name__)

TRACE_QUANTITIES = ("eta_n", "up_n", "up_t", "uf_n", "uf_t")


@dataclass
class ArterialConfig:
    """Geometry (cm), material data (CGS units), pulse, resolution and output."""

    L: float = 6.0
    R: float = 0.5
    r_p: float = 0.1
    rho_p: float = 1.1
    xi: float = 5e7
    rho_f: float = 1.0
    mu_f: float = 0.035
    s0: float = 5e-6
    K: float = 5e-9
    mu_p: float = 4.28e6
    lambda_p: float = 1.07e6
    alpha_bjs: float = 1.0
    alpha: float = 1.0
    P_max: float = 13334.0
    T_max: float = 0.003
    T: float = 0.006
    dt: float = 1e-4
    nx: int = 60
    ny_f: int = 10
    ny_wall: int = 2
    family: str = "lower"
    snapshot_times: tuple = (0.0018, 0.0036, 0.0054)
    magnify: float = 40.0

    def __post_init__(self):
        positive = ("L", "R", "r_p", "rho_p", "rho_f", "mu_f", "K", "mu_p", "T_max", "dt")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("xi", "s0", "lambda_p", "alpha_bjs", "P_max", "T", "magnify"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        for name in ("nx", "ny_f", "ny_wall"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        self.snapshot_times = tuple(float(t) for t in self.snapshot_times)

    def coefficients(self):
        return ProblemCoefficients(
            rho_f=self.rho_f, mu_f=self.mu_f, rho_p=self.rho_p, lambda_p=self.lambda_p,
            mu_p=self.mu_p, alpha=self.alpha, s0=self.s0, K=self.K * np.eye(2),
            alpha_bjs=self.alpha_bjs, xi=self.xi)

    def to_dict(self):
        d = asdict(self)
        d["snapshot_times"] = list(self.snapshot_times)
        return d


def inflow_pressure(t, P_max=13334.0, T_max=0.003):
    """Raised-cosine pulse ``P_max / 2 (1 - cos(2 pi t / T_max))`` on [0, T_max], 0 after."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("inflow pressure is defined for t >= 0")
    p = 0.5 * P_max * (1 - np.cos(2 * math.pi * t / T_max))
    out = np.where(t <= T_max, p, 0.0)
    return float(out) if out.ndim == 0 else out


def arterial_sources(P_max=13334.0, T_max=0.003):
    """Inlet pressure pulse, clamped wall ends, sliding drained outer wall."""
    T = BoundaryTag

    def inlet(x, y, t, n):
        # sigma_f n = -p_in n
        return -inflow_pressure(t, P_max, T_max) * np.moveaxis(n, -1, 0)

    return SourceFunctions(
        fluid_traction={T.FInlet: inlet},
        essential=[
            EssentialBC("eta", (T.PExt,), None, components=(0,)),
            EssentialBC("eta", (T.PInlet, T.POutlet), None),
            EssentialBC("u_p", (T.PInlet, T.POutlet), None),
        ],
    )


def arterial_problem(config):
    mesh = build_channel_mesh(config.L, config.R, config.r_p, config.nx, config.ny_f,
                              config.ny_wall)
    return CoupledProblem(mesh, config.family, config.coefficients(),
                          arterial_sources(config.P_max, config.T_max))


# ---------------------------------------------------------------------------
# post-processing

def _top_edges(mesh, tol=1e-9):
    itf = mesh.interface
    A = mesh.fluid.vertices[itf.fluid_vertices[:, 0]]
    B = mesh.fluid.vertices[itf.fluid_vertices[:, 1]]
    mid = 0.5 * (A + B)
    top = np.nonzero(mid[:, 1] >= mid[:, 1].max() - tol)[0]
    return top[np.argsort(mid[top, 0])], mid


def _vector_at(space, coeffs, cells, ref):
    B = space.evaluate(cells, ref, derivatives=False)
    if space.hdiv:
        return np.einsum("ci,ciqa->cqa", coeffs[B.dofs], B.val)[:, 0]
    return np.stack([np.einsum("ci,ciq->cq", coeffs[B.dofs + a * space.n_scalar], B.val)[:, 0]
                     for a in range(2)], axis=-1)


@dataclass
class InterfaceTrace:
    quantity: str
    t: float
    x: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        if len(self.x) < 2:
            raise ValueError("a trace needs at least two samples")

    def peak_x(self):
        return float(self.x[np.argmax(np.abs(self.value))])

    def to_csv(self):
        lines = ["x,value"] + [f"{a:.10g},{b:.10g}" for a, b in zip(self.x, self.value)]
        return "\n".join(lines) + "\n"


def extract_trace(state, problem, quantity):
    """Samples along the top interface at edge midpoints, ordered by x.

    The normal is (0, 1) and the tangent (1, 0) whatever the interface
    orientation.
    """
    if quantity not in TRACE_QUANTITIES:
        raise ValueError(f"unknown trace quantity {quantity!r}; expected one of {TRACE_QUANTITIES}")
    mesh, sp_ = problem.mesh, problem.spaces
    itf = mesh.interface
    idx, mid = _top_edges(mesh)
    s = np.array([0.5])
    if quantity.startswith("uf"):
        cells, local, verts, sub = itf.fluid_cells, itf.fluid_local, itf.fluid_vertices, mesh.fluid
        space, coeffs = sp_.u_f, state.u_f
    else:
        cells, local, verts, sub = itf.poro_cells, itf.poro_local, itf.poro_vertices, mesh.poro
        space, coeffs = (sp_.eta, state.eta) if quantity == "eta_n" else (sp_.u_p, state.u_p)
    ref = interface_ref_points((cells[idx], local[idx]), verts[idx], sub, s)
    v = _vector_at(space, coeffs, cells[idx], ref)
    comp = 1 if quantity.endswith("_n") else 0
    return InterfaceTrace(quantity, state.t, mid[idx, 0].copy(), v[:, comp].copy())


def vertex_values(space, coeffs):
    """Field values at mesh vertices, averaged over the cells sharing them."""
    m = space.mesh
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    B = space.evaluate(None, ref, derivatives=False)
    if space.hdiv:
        v = np.einsum("ci,ciqa->cqa", coeffs[B.dofs], B.val)
    elif space.ncomp == 2:
        v = np.stack([np.einsum("ci,ciq->cq", coeffs[B.dofs + a * space.n_scalar], B.val)
                      for a in range(2)], axis=-1)
    else:
        v = np.einsum("ci,ciq->cq", coeffs[B.dofs], B.val)
    out = np.zeros((m.n_vertices,) + v.shape[2:])
    cnt = np.zeros(m.n_vertices)
    np.add.at(out, m.triangles, v)
    np.add.at(cnt, m.triangles, 1.0)
    return out / cnt.reshape((-1,) + (1,) * (out.ndim - 1))


def write_vtk(path, state, problem, magnify=None):
    """Legacy ASCII VTK unstructured grid with both subdomains.

    Point data: ``velocity`` (u_f in the fluid, u_p in the wall),
    ``pressure`` (p_f, p_p) and ``displacement`` (zero in the fluid).
    ``magnify`` scales the vertical wall displacement into the geometry.
    """
    mesh, sp_ = problem.mesh, problem.spaces
    fl, po = mesh.fluid, mesh.poro
    eta = vertex_values(sp_.eta, state.eta)
    pts = np.vstack([fl.vertices, po.vertices + (0 if not magnify else
                                                 np.column_stack([0 * eta[:, 0], magnify * eta[:, 1]]))])
    tris = np.vstack([fl.triangles, po.triangles + fl.n_vertices])
    vel = np.vstack([vertex_values(sp_.u_f, state.u_f), vertex_values(sp_.u_p, state.u_p)])
    pre = np.concatenate([vertex_values(sp_.p_f, state.p_f), vertex_values(sp_.p_p, state.p_p)])
    disp = np.vstack([np.zeros((fl.n_vertices, 2)), eta])
    sub = np.concatenate([np.zeros(fl.n_cells, int), np.ones(po.n_cells, int)])
    lines = ["# vtk DataFile Version 3.0", f"fpsi t={state.t:.6g}", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {len(pts)} double"]
    lines += [f"{x:.10g} {y:.10g} 0" for x, y in pts]
    lines.append(f"CELLS {len(tris)} {4 * len(tris)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in tris]
    lines.append(f"CELL_TYPES {len(tris)}")
    lines += ["5"] * len(tris)
    lines.append(f"CELL_DATA {len(tris)}")
    lines += ["SCALARS subdomain int 1", "LOOKUP_TABLE default"] + [str(s) for s in sub]
    lines.append(f"POINT_DATA {len(pts)}")
    lines.append("VECTORS velocity double")
    lines += [f"{a:.10g} {b:.10g} 0" for a, b in vel]
    lines += ["SCALARS pressure double 1", "LOOKUP_TABLE default"] + [f"{p:.10g}" for p in pre]
    lines.append("VECTORS displacement double")
    lines += [f"{a:.10g} {b:.10g} 0" for a, b in disp]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def centerline_pressure(state, problem, n=None):
    """Fluid pressure at fluid vertices on y = 0 (or nearest row), ordered by x."""
    fl = problem.mesh.fluid
    y = fl.vertices[:, 1]
    row = np.isclose(y, y[np.argmin(np.abs(y))])
    v = vertex_values(problem.spaces.p_f, state.p_f)
    idx = np.nonzero(row)[0]
    idx = idx[np.argsort(fl.vertices[idx, 0])]
    return fl.vertices[idx, 0], v[idx]


@dataclass
class ArterialResult:
    config: ArterialConfig
    snapshots: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)
    pressure_profiles: dict = field(default_factory=dict)
    max_pressure: float = 0.0
    history: list = field(default_factory=list)
    problem: object = None
    finite: bool = True
    seconds: float = 0.0
    files: list = field(default_factory=list)


def run_arterial(config=None, outdir=None, observers=()):
    """Simulate the pulse over [0, T]; snapshots at ``config.snapshot_times``.

    With ``outdir`` the traces are written as ``trace_<quantity>_<t_ms>.csv``
    and the fields as ``fields_<t_ms>.vtk``.
    """
    import time
    config = config or ArterialConfig()
    t0 = time.perf_counter()
    problem = arterial_problem(config)
    cfg = SolverConfig(dt=config.dt, T=config.T)
    res = ArterialResult(config, problem=problem)
    snap_steps = {int(round(t / config.dt)): t for t in config.snapshot_times
                  if 0 < t <= config.T + 0.5 * config.dt}

    def observe(state, diag):
        if not all(np.all(np.isfinite(getattr(state, f))) for f in ("u_f", "p_f", "u_p", "p_p", "eta", "lam")):
            res.finite = False
        res.max_pressure = max(res.max_pressure, float(np.abs(state.p_f).max(initial=0.0)))
        if state.n in snap_steps:
            t = snap_steps[state.n]
            res.snapshots[t] = state.copy()
            res.pressure_profiles[t] = centerline_pressure(state, problem)
            for q in TRACE_QUANTITIES:
                res.traces[(q, t)] = extract_trace(state, problem, q)

    if outdir:
        os.makedirs(outdir, exist_ok=True)
    _, res.history = Stepper(problem, cfg).run(observers=(observe,) + tuple(observers))
    if outdir:
        for (q, t), tr in res.traces.items():
            p = os.path.join(outdir, f"trace_{q}_{_ms(t)}.csv")
            with open(p, "w") as fh:
                fh.write(tr.to_csv())
            res.files.append(p)
        for t, st in res.snapshots.items():
            p = os.path.join(outdir, f"fields_{_ms(t)}.vtk")
            write_vtk(p, st, problem, magnify=config.magnify)
            res.files.append(p)
    res.seconds = time.perf_counter() - t0
    return res


def _ms(t):
    """Time label in milliseconds, e.g. 0.0018 -> '1.8'."""
    return f"{1000 * t:g}"
