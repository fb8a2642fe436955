"""
Data-size quantities, the discrete small-data test and the energy bound.

For source data ``f_f, f_p, q_p`` at ``t_j``::

    C1_j = 2/rho_f |f_f|^2 + 2/rho_p |f_p|^2 + 2/(k_min beta_p^2) |q_p|^2
    C2_j = the same with backward differences d_t f^j
    C4   = 1/rho_f |f_f^1|^2 + 1/rho_p |f_p^1|^2 + 1/s0 |q_p^1|^2

Fluid boundary tractions act like a body force on the discrete velocity
space; they enter the fluid term through the L2 Riesz representative of
the traction load on the unconstrained velocity dofs.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import boundary_traction_load
from .quadrature import triangle_rule
from .spaces import reference_to_physical


def l2_norm_sq(submesh, fn, t, vector=False):
    """Squared L2 norm of ``fn(x, y, t)`` over a submesh (degree-10 rule)."""
    if fn is None:
        return 0.0
    q = triangle_rule(10)
    x = reference_to_physical(submesh, np.arange(submesh.n_cells), q.points)
    v = np.asarray(fn(x[..., 0], x[..., 1], t), dtype=float)
    v = np.broadcast_to(v, ((2,) if vector else ()) + x.shape[:2])
    sq = (v ** 2).sum(axis=0) if vector else v ** 2
    return float(np.einsum("cq,q,c->", sq, q.weights, submesh.det_jacobians))


def _difference(fn, t1, t0, dt):
    if fn is None:
        return None
    return lambda x, y, _t: (np.asarray(fn(x, y, t1)) - np.asarray(fn(x, y, t0))) / dt


class _TractionNorm:
    """L2 norm of the discrete Riesz representative of fluid boundary loads."""

    def __init__(self, problem):
        self.problem = problem
        tr = problem.sources.fluid_traction
        self.active = bool(tr)
        if self.active:
            self.free = problem.free_mask("u_f")
            M = problem.blocks.M_f.tocsr()[self.free][:, self.free].tocsc()
            self.lu = spla.splu(M)

    def load(self, t):
        sp_ = self.problem.spaces
        F = np.zeros(sp_.u_f.ndofs)
        for tag, fn in self.problem.sources.fluid_traction.items():
            F += boundary_traction_load(sp_.u_f, [tag], fn, t)
        return F[self.free]

    def norm(self, F):
        return float(np.sqrt(max(F @ self.lu.solve(F), 0.0)))


@dataclass
class DataQuantities:
    t: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    C4: float


def data_quantities(problem, dt, n_steps, k_min=None, beta_p=1.0):
    """C1, C2 at ``t_1 .. t_N`` and C4 for the problem's source data."""
    c, s = problem.coefficients, problem.sources
    if k_min is None:
        k_min = c.k_bounds()[0]
    if not (k_min > 0 and beta_p > 0):
        raise ValueError("k_min and beta_p must be positive")
    fm, pm = problem.mesh.fluid, problem.mesh.poro
    tr = _TractionNorm(problem)
    w_q = 2.0 / (k_min * beta_p ** 2)

    def fluid_norm(fn, t, diff=None):
        if diff is None:
            a = np.sqrt(l2_norm_sq(fm, fn, t, vector=True))
            b = tr.norm(tr.load(t)) if tr.active else 0.0
        else:
            t0, t1 = diff
            a = np.sqrt(l2_norm_sq(fm, _difference(fn, t1, t0, dt), t, vector=True))
            b = tr.norm((tr.load(t1) - tr.load(t0)) / dt) if tr.active else 0.0
        return (a + b) ** 2

    ts = dt * np.arange(1, n_steps + 1)
    C1, C2 = np.zeros(n_steps), np.zeros(n_steps)
    for j, t in enumerate(ts):
        C1[j] = (2 / c.rho_f * fluid_norm(s.f_f, t)
                 + 2 / c.rho_p * l2_norm_sq(pm, s.f_p, t, vector=True)
                 + w_q * l2_norm_sq(pm, s.q_p, t))
        t0 = t - dt
        C2[j] = (2 / c.rho_f * fluid_norm(s.f_f, t, diff=(t0, t))
                 + 2 / c.rho_p * l2_norm_sq(pm, _difference(s.f_p, t, t0, dt), t, vector=True)
                 + w_q * l2_norm_sq(pm, _difference(s.q_p, t, t0, dt), t))
    t1 = dt
    q1 = l2_norm_sq(pm, s.q_p, t1)
    C4 = (1 / c.rho_f * fluid_norm(s.f_f, t1) + 1 / c.rho_p * l2_norm_sq(pm, s.f_p, t1, vector=True)
          + (q1 / c.s0 if c.s0 > 0 else (np.inf if q1 > 0 else 0.0)))
    return DataQuantities(ts, C1, C2, float(C4))


@dataclass
class SmallDataReport:
    lhs: np.ndarray
    rhs: float
    satisfied: bool
    data: DataQuantities

    @property
    def worst(self):
        return float(self.lhs.max(initial=0.0))


def small_data_check(problem, dt, n_steps, S_f=1.0, K_f=1.0, beta_p=1.0, k_min=None):
    """Evaluate the discrete small-data condition at every step.

    ``lhs_n = exp(t_{n+1}) (dt sum_{j<=n} (4/3 C1 + 2/3 C2) + 2/3 C4) + C1_{n+1} / 6``
    against ``mu_f^3 / (4 rho_f^2 S_f^4 K_f^6)``.
    """
    if min(S_f, K_f, beta_p) <= 0:
        raise ValueError("S_f, K_f and beta_p must be positive")
    c = problem.coefficients
    d = data_quantities(problem, dt, n_steps, k_min, beta_p)
    acc = dt * np.cumsum(4 / 3 * d.C1 + 2 / 3 * d.C2)
    lhs = np.exp(d.t) * (acc + 2 / 3 * d.C4) + d.C1 / 6
    rhs = c.mu_f ** 3 / (4 * c.rho_f ** 2 * S_f ** 4 * K_f ** 6)
    return SmallDataReport(lhs, float(rhs), bool(np.all(lhs < rhs)), d)


@dataclass
class EnergyReport:
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    satisfied: bool

    @property
    def min_margin(self):
        """Smallest (rhs - lhs) / rhs over the steps (1 when both vanish)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            m = np.where(self.rhs > 0, (self.rhs - self.lhs) / self.rhs,
                         np.where(self.lhs <= 0, 1.0, -np.inf))
        return float(m.min(initial=1.0))


def energy_report(history, data, coefficients, dt, k_min=None, beta_p=1.0, initial=0.0):
    """Cumulative energy/dissipation sum versus its data bound at every step.

    ``history`` is the list of :class:`StepDiagnostics` of a run and
    ``data`` the matching :class:`DataQuantities`.  ``initial`` is the
    energy carried by nonzero initial data; it is added to the bound,
    which then follows from the same Gronwall argument.
    """
    c = coefficients
    if k_min is None:
        k_min = c.k_bounds()[0]
    kb = k_min * beta_p ** 2
    n = len(history)
    if n != len(data.C1):
        raise ValueError(f"history has {n} steps but data has {len(data.C1)}")
    g = lambda name: np.array([getattr(h, name) for h in history])
    t = g("t")
    cum = lambda a: dt * np.cumsum(a)
    lhs = (0.5 * g("kinetic_fluid") + 1.5 * cum(g("viscous")) + 2 * cum(g("bjs"))
           + 0.5 * g("kinetic_solid") + g("elastic") + g("storage") + cum(g("darcy"))
           + 0.5 * kb * cum(g("p_p_sq")) + kb * cum(g("lam_sq")))
    rhs = np.exp(t) * (dt * np.cumsum(data.C1) + initial)
    tol = 1e-12 * max(float(np.abs(rhs).max(initial=0.0)), 1e-300)
    return EnergyReport(t, lhs, rhs, bool(np.all(lhs <= rhs + tol)))
