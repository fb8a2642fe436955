"""
Manufactured-solution convergence harness and discrete inf-sup estimates.

The manufactured fields live on a fluid square (0,1)x(0,1) sitting on a
poroelastic square (0,1)x(-1,0).  With ``g(x, y) = (-3x + cos y, y + 1)``::

    u_f  = pi cos(pi t) g
    p_f  = e^t sin(pi x) cos(pi y / 2) + 2 pi cos(pi t)
    u_p  = pi e^t (-cos(pi x) cos(pi y / 2), sin(pi x) sin(pi y / 2) / 2)
    p_p  = e^t sin(pi x) cos(pi y / 2)
    eta  = sin(pi t) g

They satisfy all interface conditions on y = 0 when mu_f = 1, K = I,
alpha = 1 and lambda_p = mu_p; the remaining coefficients are free.
"""
from dataclasses import dataclass, field
import io
import logging
import math

import numpy as np
import scipy.sparse as sp

from .assembly import (EssentialBC, ProblemCoefficients, SourceFunctions,
                       assemble_b, assemble_bgamma, assemble_h1_inner, assemble_hdiv_inner,
                       assemble_mass, assemble_multiplier_mass)
from .elements import ElementKind
from .linalg import smallest_singular_estimate
from .mesh import BoundaryTag, build_rectangle_coupled_mesh
from .quadrature import edge_rule, triangle_rule
from .spaces import FunctionSpace, build_coupled_spaces, essential_bc_mask
from .stepper import CoupledProblem, SolverConfig, Stepper, TimeState, initial_energy

log = logging.getLogger(__name__)

PI = math.pi

NORMS = ("e_uf_l2H1", "e_pf_l2L2", "e_up_l2L2", "e_divup_l2L2",
         "e_pp_linfL2", "e_eta_linfH1", "e_lam_l2L2")


def _g(x, y):
    return np.stack([-3 * x + np.cos(y), y + 1.0 + 0 * x])


def _grad_g(x, y):
    z = 0 * x
    return np.stack([np.stack([-3 + z, -np.sin(y)]), np.stack([z, 1 + z])])


def _s(x, y):
    """sin(pi x) cos(pi y / 2)"""
    return np.sin(PI * x) * np.cos(PI * y / 2)


def _grad_s(x, y):
    return np.stack([PI * np.cos(PI * x) * np.cos(PI * y / 2),
                     -PI / 2 * np.sin(PI * x) * np.sin(PI * y / 2)])


class ManufacturedSolution:
    """Closed-form fields and matching sources.

    Vector fields return arrays stacked on the first axis; gradients are
    indexed ``[component, derivative]``.
    """

    def __init__(self, coefficients=None):
        c = coefficients or ProblemCoefficients()
        K = c.K_at(np.zeros(1), np.zeros(1))[0]
        bad = []
        if not np.isclose(c.mu_f, 1.0):
            bad.append("mu_f = 1")
        if not np.allclose(K, np.eye(2)):
            bad.append("K = I")
        if not np.isclose(c.alpha, 1.0):
            bad.append("alpha = 1")
        if not np.isclose(c.lambda_p, c.mu_p):
            bad.append("lambda_p = mu_p")
        if bad:
            raise ValueError("the manufactured fields satisfy the interface conditions only for "
                             + ", ".join(bad))
        self.c = c

    # fields -------------------------------------------------------------
    def u_f(self, x, y, t):
        return PI * np.cos(PI * t) * _g(x, y)

    def grad_u_f(self, x, y, t):
        return PI * np.cos(PI * t) * _grad_g(x, y)

    def p_f(self, x, y, t):
        return np.exp(t) * _s(x, y) + 2 * PI * np.cos(PI * t)

    def u_p(self, x, y, t):
        return -np.exp(t) * _grad_s(x, y)

    def div_u_p(self, x, y, t):
        return 1.25 * PI ** 2 * np.exp(t) * _s(x, y)

    def p_p(self, x, y, t):
        return np.exp(t) * _s(x, y)

    def eta(self, x, y, t):
        return np.sin(PI * t) * _g(x, y)

    def grad_eta(self, x, y, t):
        return np.sin(PI * t) * _grad_g(x, y)

    def lam(self, x, y, t):
        return self.p_p(x, y, t)

    # sources ------------------------------------------------------------
    def f_f(self, x, y, t):
        c = self.c
        g = _g(x, y)
        adv = np.stack([-3 * g[0] - g[1] * np.sin(y), g[1]])
        lap = np.stack([-np.cos(y), 0 * x])
        return (-c.rho_f * PI ** 2 * np.sin(PI * t) * g
                + np.exp(t) * _grad_s(x, y)
                - c.mu_f * PI * np.cos(PI * t) * lap
                + c.rho_f * PI ** 2 * np.cos(PI * t) ** 2 * adv)

    def q_f(self, x, y, t):
        return -2 * PI * np.cos(PI * t) + 0 * x

    def f_p(self, x, y, t):
        c = self.c
        g = _g(x, y)
        lap = np.stack([-np.cos(y), 0 * x])
        return (-c.rho_p * PI ** 2 * np.sin(PI * t) * g
                - c.mu_p * np.sin(PI * t) * lap
                + c.alpha * np.exp(t) * _grad_s(x, y)
                + c.xi * np.sin(PI * t) * g)

    def q_p(self, x, y, t):
        c = self.c
        return (c.s0 * self.p_p(x, y, t) - 2 * c.alpha * PI * np.cos(PI * t)
                + self.div_u_p(x, y, t))

    def sources(self):
        """Source data and boundary conditions for the coupled problem."""
        T = BoundaryTag
        return SourceFunctions(
            f_f=self.f_f, f_p=self.f_p, q_p=self.q_p, q_f=self.q_f,
            darcy_pressure={T.GammaPD: self.p_p},
            essential=[EssentialBC("u_f", (T.GammaF,), self.u_f),
                       EssentialBC("eta", (T.GammaPD,), self.eta)],
        )


def mms_sources(solution, x, y, t):
    """(f_f, q_f, f_p, q_p) of ``solution`` at points and time."""
    s = solution
    return s.f_f(x, y, t), s.q_f(x, y, t), s.f_p(x, y, t), s.q_p(x, y, t)


def _d1(fn, k, h):
    """Central first derivative of ``fn(z)`` along coordinate ``k`` of z = (x, y, t)."""
    def out(z):
        zp, zm = list(z), list(z)
        zp[k] = z[k] + h
        zm[k] = z[k] - h
        return (fn(zp) - fn(zm)) / (2 * h)
    return out


def _d1_wide(fn, k, H):
    """Fourth-order first derivative; nests without roundoff blow-up for H ~ 1e-3."""
    def out(z):
        def at(s):
            zz = list(z)
            zz[k] = z[k] + s * H
            return fn(zz)
        return (-at(2) + 8 * at(1) - 8 * at(-1) + at(-2)) / (12 * H)
    return out


def strong_residuals(solution, x, y, t, step=1e-5):
    """Residuals of the strong equations with finite-difference derivatives.

    First derivatives use central differences with ``step``; second and
    mixed derivatives nest fourth-order stencils with ``100 * step``, which
    keeps roundoff below the truncation error.  Only the sources come from
    the closed forms, so a slip in their derivation shows up here.
    """
    s, c = solution, solution.c
    z = [x, y, t]
    H = 100 * step
    wrap = lambda f: (lambda zz: f(zz[0], zz[1], zz[2]))
    comp = lambda f, a: (lambda zz: f(zz[0], zz[1], zz[2])[a])
    d = lambda f, k: _d1(f, k, step)(z)
    dd = lambda f, k, l: _d1_wide(_d1_wide(f, k, H), l, H)(z)

    def lap(f):
        return np.stack([dd(comp(f, a), 0, 0) + dd(comp(f, a), 1, 1) for a in range(2)])

    def grad_div(f):
        return np.stack([dd(comp(f, 0), 0, b) + dd(comp(f, 1), 1, b) for b in range(2)])

    def grad(f):
        return np.stack([d(wrap(f), 0), d(wrap(f), 1)])

    u = s.u_f(x, y, t)
    dtu = np.stack([d(comp(s.u_f, a), 2) for a in range(2)])
    conv = np.stack([u[0] * d(comp(s.u_f, a), 0) + u[1] * d(comp(s.u_f, a), 1) for a in range(2)])
    fluid = (c.rho_f * dtu + c.rho_f * conv + grad(s.p_f)
             - c.mu_f * (lap(s.u_f) + grad_div(s.u_f)) - s.f_f(x, y, t))
    dtt = np.stack([dd(comp(s.eta, a), 2, 2) for a in range(2)])
    solid = (c.rho_p * dtt - c.mu_p * lap(s.eta) - (c.mu_p + c.lambda_p) * grad_div(s.eta)
             + c.alpha * grad(s.p_p) + c.xi * s.eta(x, y, t) - s.f_p(x, y, t))
    Kinv = np.linalg.inv(c.K_at(np.zeros(1), np.zeros(1))[0])
    darcy = c.mu_f * np.einsum("ab,b...->a...", Kinv, s.u_p(x, y, t)) + grad(s.p_p)
    dt_div_eta = dd(comp(s.eta, 0), 0, 2) + dd(comp(s.eta, 1), 1, 2)
    div_up = d(comp(s.u_p, 0), 0) + d(comp(s.u_p, 1), 1)
    mass_p = c.s0 * d(wrap(s.p_p), 2) + c.alpha * dt_div_eta + div_up - s.q_p(x, y, t)
    mass_f = d(comp(s.u_f, 0), 0) + d(comp(s.u_f, 1), 1) - s.q_f(x, y, t)
    return {"fluid_momentum": fluid, "fluid_mass": mass_f, "solid_momentum": solid,
            "darcy": darcy, "darcy_mass": mass_p}


def interface_residuals(solution, x, t):
    """Residuals of the four interface conditions along y = 0."""
    s, c = solution, solution.c
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = 0 * x
    n_f = np.array([0.0, -1.0])
    n_p = -n_f
    tau = np.array([1.0, 0.0])
    h = 1e-6
    deta = (s.eta(x, y, t + h) - s.eta(x, y, t - h)) / (2 * h)
    uf, up = s.u_f(x, y, t), s.u_p(x, y, t)
    mass = np.einsum("a...,a->...", uf, n_f) + np.einsum("a...,a->...", deta + up, n_p)
    G = s.grad_u_f(x, y, t)
    D = 0.5 * (G + np.swapaxes(G, 0, 1))
    sig_f = -s.p_f(x, y, t) * np.eye(2)[:, :, None] + 2 * c.mu_f * D
    E = s.grad_eta(x, y, t)
    De = 0.5 * (E + np.swapaxes(E, 0, 1))
    tr = De[0, 0] + De[1, 1]
    sig_p = (2 * c.mu_p * De + (c.lambda_p * tr - c.alpha * s.p_p(x, y, t)) * np.eye(2)[:, :, None])
    tf = np.einsum("ab...,b->a...", sig_f, n_f)
    tp = np.einsum("ab...,b->a...", sig_p, n_p)
    normal = -np.einsum("a...,a->...", tf, n_f) - s.p_p(x, y, t)
    balance = tf + tp
    Kt = tau @ c.K_at(np.zeros(1), np.zeros(1))[0] @ tau
    slip = (-np.einsum("a...,a->...", tf, tau)
            - c.mu_f * c.alpha_bjs / np.sqrt(Kt) * np.einsum("a...,a->...", uf - deta, tau))
    return {"mass": mass, "normal_stress": normal, "stress_balance": balance, "bjs": slip}


# ---------------------------------------------------------------------------
# error norms

class FieldSampler:
    """Discrete fields and exact data at cached volume/edge quadrature points."""

    def __init__(self, spaces, mesh, degree=8):
        self.spaces = spaces
        self.mesh = mesh
        q = triangle_rule(degree)
        self.basis = {}
        self.weights = {}
        for name in ("u_f", "p_f", "u_p", "p_p", "eta"):
            space = getattr(spaces, name)
            B = space.evaluate(None, q.points)
            self.basis[name] = B
            self.weights[name] = space.mesh.det_jacobians[:, None] * q.weights[None, :]
        qe = edge_rule(degree)
        self.edge_phi = spaces.lam.eval(qe.points)
        self.edge_x = spaces.lam.points(qe.points)
        self.edge_w = qe.weights[None, :] * mesh.interface.lengths[:, None]

    def values(self, name, coeffs):
        space = getattr(self.spaces, name)
        B = self.basis[name]
        if space.hdiv:
            u = coeffs[B.dofs]
            return (np.einsum("ci,ciqa->acq", u, B.val), np.einsum("ci,ciq->cq", u, B.div))
        if space.ncomp == 1:
            u = coeffs[B.dofs]
            return np.einsum("ci,ciq->cq", u, B.val), np.einsum("ci,ciqa->acq", u, B.grad)
        vals, grads = [], []
        for a in range(2):
            u = coeffs[B.dofs + a * space.n_scalar]
            vals.append(np.einsum("ci,ciq->cq", u, B.val))
            grads.append(np.einsum("ci,ciqb->bcq", u, B.grad))
        return np.stack(vals), np.stack(grads)

    def integrate(self, name, sq):
        return float(np.sum(sq * self.weights[name]))

    def points(self, name):
        x = self.basis[name].x
        return x[..., 0], x[..., 1]


@dataclass
class StepErrors:
    """Squared absolute errors and exact norms at one time level."""

    err: dict
    ref: dict


def step_errors(sampler, state, solution):
    """Squared errors and squared exact norms of every field at ``state.t``."""
    s, t = solution, state.t
    err, ref = {}, {}

    x, y = sampler.points("u_f")
    v, g = sampler.values("u_f", state.u_f)
    ue, ge = s.u_f(x, y, t), s.grad_u_f(x, y, t)
    err["u_f"] = sampler.integrate("u_f", ((v - ue) ** 2).sum(0) + ((g - ge) ** 2).sum((0, 1)))
    ref["u_f"] = sampler.integrate("u_f", (ue ** 2).sum(0) + (ge ** 2).sum((0, 1)))

    v, _ = sampler.values("p_f", state.p_f)
    pe = s.p_f(x, y, t)
    err["p_f"] = sampler.integrate("p_f", (v - pe) ** 2)
    ref["p_f"] = sampler.integrate("p_f", pe ** 2)

    x, y = sampler.points("u_p")
    v, d = sampler.values("u_p", state.u_p)
    ue, de = s.u_p(x, y, t), s.div_u_p(x, y, t)
    err["u_p"] = sampler.integrate("u_p", ((v - ue) ** 2).sum(0))
    ref["u_p"] = sampler.integrate("u_p", (ue ** 2).sum(0))
    err["div_u_p"] = sampler.integrate("u_p", (d - de) ** 2)
    ref["div_u_p"] = sampler.integrate("u_p", de ** 2)

    x, y = sampler.points("p_p")
    v, _ = sampler.values("p_p", state.p_p)
    pe = s.p_p(x, y, t)
    err["p_p"] = sampler.integrate("p_p", (v - pe) ** 2)
    ref["p_p"] = sampler.integrate("p_p", pe ** 2)

    x, y = sampler.points("eta")
    v, g = sampler.values("eta", state.eta)
    ee, ge = s.eta(x, y, t), s.grad_eta(x, y, t)
    err["eta"] = sampler.integrate("eta", ((v - ee) ** 2).sum(0) + ((g - ge) ** 2).sum((0, 1)))
    ref["eta"] = sampler.integrate("eta", (ee ** 2).sum(0) + (ge ** 2).sum((0, 1)))

    lam_h = np.einsum("ei,iq->eq", state.lam.reshape(-1, sampler.spaces.lam.nloc), sampler.edge_phi)
    xe = sampler.edge_x
    le = s.lam(xe[..., 0], xe[..., 1], t)
    err["lam"] = float(np.sum((lam_h - le) ** 2 * sampler.edge_w))
    ref["lam"] = float(np.sum(le ** 2 * sampler.edge_w))
    return StepErrors(err, ref)


_NORM_FIELDS = {
    "e_uf_l2H1": ("u_f", "l2"), "e_pf_l2L2": ("p_f", "l2"), "e_up_l2L2": ("u_p", "l2"),
    "e_divup_l2L2": ("div_u_p", "l2"), "e_pp_linfL2": ("p_p", "linf"),
    "e_eta_linfH1": ("eta", "linf"), "e_lam_l2L2": ("lam", "l2"),
}


class ErrorAccumulator:
    """Observer composing per-step errors into discrete-in-time norms."""

    def __init__(self, sampler, solution, dt):
        self.sampler = sampler
        self.solution = solution
        self.dt = dt
        self.steps = []

    def __call__(self, state, diag=None):
        self.steps.append(step_errors(self.sampler, state, self.solution))

    def norms(self, relative=True):
        """Dict of the seven error norms; relative to the exact solution by default.

        When an exact norm vanishes the absolute value is returned and the
        key is listed in ``self.absolute``.
        """
        self.absolute = []
        out = {}
        for key, (f, kind) in _NORM_FIELDS.items():
            e = np.array([s.err[f] for s in self.steps])
            r = np.array([s.ref[f] for s in self.steps])
            if kind == "l2":
                ev, rv = np.sqrt(self.dt * e.sum()), np.sqrt(self.dt * r.sum())
            else:
                ev, rv = np.sqrt(e.max(initial=0.0)), np.sqrt(r.max(initial=0.0))
            if relative and rv > 0:
                out[key] = float(ev / rv)
            else:
                out[key] = float(ev)
                if relative:
                    self.absolute.append(key)
        return out


def error_norms(states, solution, spaces, mesh, dt, relative=True):
    """The seven error norms for a sequence of states ``t_1 .. t_N``."""
    acc = ErrorAccumulator(FieldSampler(spaces, mesh), solution, dt)
    for s in states:
        acc(s)
    return acc.norms(relative)


def convergence_rate(e_coarse, e_fine):
    """log2(e_coarse / e_fine) for a halving of the mesh size."""
    if not (e_coarse > 0 and e_fine > 0):
        raise ValueError("convergence rates need positive errors")
    return math.log2(e_coarse / e_fine)


# ---------------------------------------------------------------------------
# convergence study

def mms_mesh(h):
    n = int(round(1.0 / h))
    if n < 1 or not math.isclose(n * h, 1.0, rel_tol=1e-9):
        raise ValueError(f"h = {h} must be 1/n for a positive integer n")
    return build_rectangle_coupled_mesh((0.0, 1.0, -1.0, 1.0), 0.0, n, n, n)


def mms_initial_state(problem, solution, dt):
    """Interpolated exact data at t = 0 and t = -dt.

    ``p_p`` is L2-projected; the velocity and displacement use the
    canonical interpolants; ``eta_prev`` interpolates ``eta(-dt)`` so the
    first difference quotient approximates the exact initial velocity.
    """
    sp_ = problem.spaces
    st = TimeState.zeros(sp_)
    st.u_f = sp_.u_f.interpolate(lambda x, y: solution.u_f(x, y, 0.0))
    st.eta = sp_.eta.interpolate(lambda x, y: solution.eta(x, y, 0.0))
    st.eta_prev = sp_.eta.interpolate(lambda x, y: solution.eta(x, y, -dt))
    st.p_p = sp_.p_p.l2_project(lambda x, y: solution.p_p(x, y, 0.0))
    return st


@dataclass
class RunResult:
    h: float
    errors: dict
    history: list
    problem: object = None
    initial_energy: float = 0.0
    final: object = None
    seconds: float = 0.0


def run_mms(h, family="lower", dt=2.5e-4, T=0.1, coefficients=None, observers=()):
    """One manufactured-solution run; returns a :class:`RunResult`."""
    import time
    c = coefficients or ProblemCoefficients()
    sol = ManufacturedSolution(c)
    mesh = mms_mesh(h)
    t0 = time.perf_counter()
    problem = CoupledProblem(mesh, family, c, sol.sources())
    cfg = SolverConfig(dt=dt, T=T)
    init = mms_initial_state(problem, sol, dt)
    acc = ErrorAccumulator(FieldSampler(problem.spaces, mesh), sol, dt)
    final, hist = Stepper(problem, cfg).run(init, observers=(acc,) + tuple(observers))
    sec = time.perf_counter() - t0
    log.info("h=%g %s: %d steps, %d dofs, %.1fs", h, family, cfg.n_steps, problem.ndofs, sec)
    return RunResult(h, acc.norms(), hist, problem, initial_energy(problem, init, dt), final, sec)


@dataclass
class ErrorTable:
    h: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def add(self, h, errors):
        self.h.append(h)
        self.errors.append(dict(errors))

    def rates(self):
        """Rates between consecutive rows; one dict per row, empty for the first."""
        out = [{}]
        for i in range(1, len(self.h)):
            out.append({k: convergence_rate(self.errors[i - 1][k], self.errors[i][k])
                        for k in NORMS if self.errors[i - 1].get(k, 0) > 0 and self.errors[i].get(k, 0) > 0})
        return out

    def last_rates(self):
        r = self.rates()
        return r[-1] if len(r) > 1 else {}

    def to_csv(self):
        buf = io.StringIO()
        head = ["h"]
        for k in NORMS:
            head += [k, "rate"]
        buf.write(",".join(head) + "\n")
        for h, e, r in zip(self.h, self.errors, self.rates()):
            row = [f"{h:.6g}"]
            for k in NORMS:
                row.append(f"{e[k]:.4e}")
                row.append(f"{r[k]:.2f}" if k in r else "")
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


def convergence_study(family="lower", hs=(1 / 8, 1 / 16, 1 / 32, 1 / 64), dt=2.5e-4, T=0.1,
                      coefficients=None, keep_runs=False):
    """Manufactured-solution errors for a sequence of halved mesh sizes.

    Returns
    -------
    table : ErrorTable
    runs : list of RunResult (problem objects dropped unless ``keep_runs``)
    """
    hs = list(hs)
    for a, b in zip(hs, hs[1:]):
        if not math.isclose(a, 2 * b, rel_tol=1e-9):
            raise ValueError("mesh sizes must decrease by exactly a factor 2")
    table, runs = ErrorTable(), []
    for h in hs:
        res = run_mms(h, family, dt, T, coefficients)
        table.add(h, res.errors)
        if not keep_runs:
            res.problem = None
            res.final = None
        runs.append(res)
    return table, runs


# ---------------------------------------------------------------------------
# inf-sup estimates

def stokes_infsup(submesh, velocity_kind=ElementKind.P1Bubble, pressure_kind=ElementKind.P1,
                  dirichlet_tags=None):
    """Discrete Stokes inf-sup constant with H1 velocity and L2 pressure norms.

    Velocity dofs on ``dirichlet_tags`` (default: every tag present) are
    removed.  When the whole boundary is Dirichlet, constant pressures are
    excluded.
    """
    V = FunctionSpace(submesh, velocity_kind, vector=True)
    Q = FunctionSpace(submesh, pressure_kind)
    present = submesh.tags_present()
    tags = present if dirichlet_tags is None else set(dirichlet_tags)
    free = np.ones(V.ndofs, dtype=bool)
    if tags:
        d, _ = essential_bc_mask(V, tags)
        free[d] = False
    B = assemble_b(V, Q).tocsc()[:, free]
    Hv = assemble_h1_inner(V).tocsr()[free][:, free]
    Mq = assemble_mass(Q)
    deflate = np.ones((Q.ndofs, 1)) if tags >= present else None
    return smallest_singular_estimate(B, Hv, Mq, deflate=deflate)


def infsup_check(mesh, family="lower"):
    """Estimates of the fluid and Darcy/multiplier inf-sup constants.

    ``beta_f`` pairs the fluid pressure with H1 velocities vanishing on the
    exterior fluid boundary; ``beta_p`` pairs (p_p, lam) with H(div)
    Darcy velocities through ``b_p`` and the interface coupling.
    """
    sp_ = build_coupled_spaces(mesh, family)
    fl = mesh.fluid
    ext = fl.tags_present() - {BoundaryTag.GammaFP}
    beta_f = stokes_infsup(fl, sp_.u_f.kind, sp_.p_f.kind, ext)
    _, G_p, _ = assemble_bgamma(sp_.u_f, sp_.u_p, sp_.eta, sp_.lam, mesh)
    B = sp.vstack([assemble_b(sp_.u_p, sp_.p_p), G_p]).tocsr()
    Mw = sp.block_diag([assemble_mass(sp_.p_p), assemble_multiplier_mass(sp_.lam)])
    beta_p = smallest_singular_estimate(B, assemble_hdiv_inner(sp_.u_p), Mw)
    return {"beta_f_estimate": beta_f, "beta_p_estimate": beta_p}
