"""
Backward-Euler time stepping of the coupled Navier-Stokes / Biot system
with time-lagged convection.

Each step solves one linear saddle-point system for
``(u_f, p_f, u_p, p_p, eta, lam)`` at ``t_{n+1}``.  The convecting
velocity is ``u_f`` at ``t_n``; ``eta`` at ``t_n`` and ``t_{n-1}`` feed the
second difference quotient of the displacement.
"""
from dataclasses import dataclass, field, replace
import logging

import numpy as np

from .assembly import (FIELDS, EssentialBC, ProblemCoefficients, SourceFunctions,
                       apply_essential, assemble_convection, assemble_rhs,
                       assemble_static_blocks, compose_step_system, field_offsets)
from .linalg import LinearSolveError, ReusingSolver
from .spaces import build_coupled_spaces, essential_bc_mask

log = logging.getLogger(__name__)

# equations whose residuals express discrete mass balance
CONSERVATION_FIELDS = ("p_f", "p_p", "lam")


class StepError(RuntimeError):
    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class SolverConfig:
    dt: float
    T: float
    residual_tol: float = 1e-8
    output_every: int = 1
    scale: bool = True
    solve_tol: float = 1e-12

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.dt > 1:
            raise ValueError(f"dt must not exceed 1, got {self.dt}")
        if self.T < 0:
            raise ValueError(f"T must be non-negative, got {self.T}")
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-8 * max(1.0, n):
            raise ValueError(f"T = {self.T} is not an integer multiple of dt = {self.dt}")
        if self.output_every < 1:
            raise ValueError("output_every must be >= 1")

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))


@dataclass
class TimeState:
    """Coefficient vectors at ``t`` plus the displacement one step earlier."""

    t: float
    n: int
    u_f: np.ndarray
    p_f: np.ndarray
    u_p: np.ndarray
    p_p: np.ndarray
    eta: np.ndarray
    lam: np.ndarray
    eta_prev: np.ndarray

    @classmethod
    def zeros(cls, spaces, t=0.0):
        z = {f: np.zeros(getattr(spaces, f).ndofs) for f in FIELDS}
        return cls(t=t, n=0, eta_prev=np.zeros(spaces.eta.ndofs), **z)

    def vector(self):
        return np.concatenate([getattr(self, f) for f in FIELDS])

    def copy(self):
        return replace(self, **{f: getattr(self, f).copy() for f in FIELDS + ("eta_prev",)})

    def max_abs(self):
        return max(float(np.abs(getattr(self, f)).max(initial=0.0)) for f in FIELDS)


@dataclass
class StepDiagnostics:
    """Energy and dissipation terms at ``t_{n+1}`` plus solve statistics.

    ``kinetic_fluid = rho_f |u_f|^2``, ``kinetic_solid = rho_p |d_t eta|^2``,
    ``elastic = a_e(eta, eta)``, ``storage = s0 |p_p|^2``,
    ``viscous = 2 mu_f |D u_f|^2``, ``darcy = |K^{-1/2} u_p|^2``,
    ``bjs = |u_f - d_t eta|^2_BJS``, ``p_p_sq = |p_p|^2``,
    ``lam_sq = |lam|^2`` on the interface.
    """

    n: int
    t: float
    kinetic_fluid: float
    kinetic_solid: float
    elastic: float
    storage: float
    viscous: float
    darcy: float
    bjs: float
    p_p_sq: float
    lam_sq: float
    residual: float = 0.0
    conservation: dict = field(default_factory=dict)
    factor_time: float = 0.0
    solve_time: float = 0.0
    pivot_growth: float = 0.0
    refinement_steps: int = 0
    refactored: bool = True

    def energy_terms(self):
        names = ("kinetic_fluid", "kinetic_solid", "elastic", "storage", "viscous",
                 "darcy", "bjs", "p_p_sq", "lam_sq")
        return {k: getattr(self, k) for k in names}


class CoupledProblem:
    """Spaces, static blocks, data and boundary conditions of one simulation.

    Parameters
    ----------
    mesh : CoupledMesh
    family : {"lower", "higher"}
    coefficients : ProblemCoefficients
    sources : SourceFunctions
        ``sources.essential`` lists :class:`EssentialBC` entries.
    """

    def __init__(self, mesh, family="lower", coefficients=None, sources=None):
        self.mesh = mesh
        self.family = family
        self.coefficients = coefficients or ProblemCoefficients()
        self.sources = sources or SourceFunctions()
        self.spaces = build_coupled_spaces(mesh, family)
        self.offsets = field_offsets(self.spaces)
        self.blocks = assemble_static_blocks(self.spaces, mesh, self.coefficients)
        for bc in self.sources.essential:
            if bc.field not in ("u_f", "u_p", "eta"):
                raise ValueError(f"essential conditions apply to u_f, u_p or eta, not {bc.field!r}")

    @property
    def ndofs(self):
        return self.spaces.ndofs

    def essential_data(self, t):
        """Global constrained dofs and values at time ``t``."""
        dofs, vals = [np.zeros(0, dtype=np.int64)], [np.zeros(0)]
        for bc in self.sources.essential:
            space = getattr(self.spaces, bc.field)
            d, v = essential_bc_mask(space, bc.tags, bc.value, t, bc.components)
            dofs.append(d + self.offsets[bc.field])
            vals.append(v)
        dofs, vals = np.concatenate(dofs), np.concatenate(vals)
        # later entries win on shared dofs
        _, idx = np.unique(dofs[::-1], return_index=True)
        keep = len(dofs) - 1 - idx
        return dofs[keep], vals[keep]

    def free_mask(self, name):
        """Boolean mask of unconstrained dofs of one field."""
        space = getattr(self.spaces, name)
        mask = np.ones(space.ndofs, dtype=bool)
        for bc in self.sources.essential:
            if bc.field == name:
                d, _ = essential_bc_mask(space, bc.tags, None, 0.0, bc.components)
                mask[d] = False
        return mask

    def loads(self, t):
        return assemble_rhs(self.sources, self.spaces, t)

    def split(self, x):
        return {f: x[self.offsets[f]:self.offsets[f] + getattr(self.spaces, f).ndofs].copy()
                for f in FIELDS}


class Stepper:
    """Advance a :class:`CoupledProblem` in time."""

    def __init__(self, problem, config):
        self.problem = problem
        self.config = config
        self.solver = ReusingSolver(tol=config.solve_tol, scale=config.scale)

    def system(self, state):
        """The constrained linear system for the step ``t_n -> t_{n+1}``."""
        p, c, dt = self.problem, self.problem.coefficients, self.config.dt
        t1 = state.t + dt
        sp_ = p.spaces
        N = assemble_convection(sp_.u_f, state.u_f, c.rho_f) if np.any(state.u_f) else None
        raw = compose_step_system(p.blocks, c, dt, sp_, convection=N, loads=p.loads(t1),
                                  u_f_prev=state.u_f, eta_prev=state.eta,
                                  eta_prev2=state.eta_prev, p_p_prev=state.p_p)
        dofs, vals = p.essential_data(t1)
        return apply_essential(raw, dofs, vals)

    def step(self, state):
        """Return ``(new_state, diagnostics)``."""
        p = self.problem
        dt = self.config.dt
        sys_ = self.system(state)
        try:
            x, rep = self.solver.solve(sys_.matrix, sys_.rhs)
        except LinearSolveError as exc:
            raise StepError(state.n + 1, str(exc)) from exc
        f = p.split(x)
        new = TimeState(t=state.t + dt, n=state.n + 1, eta_prev=state.eta.copy(), **f)
        r = sys_.matrix @ x - sys_.rhs
        bnorm = float(np.linalg.norm(sys_.rhs)) or 1.0
        cons = {}
        for name in CONSERVATION_FIELDS:
            blk = sys_.block(name)
            cons[name] = float(np.abs(r[blk]).max(initial=0.0)) / bnorm
        diag = energy_terms(p, new, state, dt)
        diag.residual = rep.relative_residual
        diag.conservation = cons
        diag.factor_time, diag.solve_time = rep.factor_time, rep.solve_time
        diag.pivot_growth = rep.pivot_growth
        diag.refinement_steps, diag.refactored = rep.refinement_steps, rep.refactored
        worst = max(cons.values(), default=0.0)
        if worst > self.config.residual_tol:
            log.warning("step %d: conservation residual %.3e exceeds %.1e",
                        new.n, worst, self.config.residual_tol)
        return new, diag

    def run(self, initial=None, observers=()):
        """Take ``config.n_steps`` steps.

        ``observers`` are called as ``obs(state, diagnostics)`` after every
        ``output_every`` steps and after the last one.

        Returns
        -------
        final : TimeState
        history : list of StepDiagnostics
        """
        state = initial if initial is not None else TimeState.zeros(self.problem.spaces)
        history = []
        n = self.config.n_steps
        for k in range(n):
            try:
                state, diag = self.step(state)
            except StepError:
                raise
            except Exception as exc:
                raise StepError(state.n + 1, f"{type(exc).__name__}: {exc}") from exc
            history.append(diag)
            if (k + 1) % self.config.output_every == 0 or k + 1 == n:
                for obs in observers:
                    obs(state, diag)
        return state, history


def energy_terms(problem, new, old, dt):
    """Energy and dissipation quantities of ``new`` (``old`` supplies d_t eta)."""
    b, c = problem.blocks, problem.coefficients
    dteta = (new.eta - old.eta) / dt
    S = b.bjs
    slip = (new.u_f @ (S["ff"] @ new.u_f) + 2 * new.u_f @ (S["fe"] @ dteta)
            + dteta @ (S["ee"] @ dteta))
    M_s_dteta = b.M_s @ dteta
    return StepDiagnostics(
        n=new.n, t=new.t,
        kinetic_fluid=c.rho_f * float(new.u_f @ (b.M_f @ new.u_f)),
        kinetic_solid=c.rho_p * float(dteta @ M_s_dteta),
        elastic=float(new.eta @ (b.A_e @ new.eta)),
        storage=c.s0 * float(new.p_p @ (b.M_p @ new.p_p)),
        viscous=float(new.u_f @ (b.A_f @ new.u_f)),
        darcy=float(new.u_p @ (b.A_d @ new.u_p)) / c.mu_f,
        bjs=max(float(slip), 0.0),
        p_p_sq=float(new.p_p @ (b.M_p @ new.p_p)),
        lam_sq=float(new.lam @ (b.M_lam @ new.lam)),
    )


def initial_energy(problem, state, dt):
    """rho_f |u^0|^2 + rho_p |d_t eta^0|^2 + a_e(eta^0, eta^0) + s0 |p_p^0|^2."""
    b, c = problem.blocks, problem.coefficients
    dteta = (state.eta - state.eta_prev) / dt
    return float(c.rho_f * state.u_f @ (b.M_f @ state.u_f)
                 + c.rho_p * dteta @ (b.M_s @ dteta)
                 + state.eta @ (b.A_e @ state.eta)
                 + c.s0 * state.p_p @ (b.M_p @ state.p_p))
