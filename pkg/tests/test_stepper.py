import numpy as np
import pytest

from fpsi.assembly import EssentialBC, ProblemCoefficients, SourceFunctions
from fpsi.mesh import BoundaryTag, build_rectangle_coupled_mesh
from fpsi.stepper import (FIELDS, CoupledProblem, SolverConfig, Stepper, TimeState,
                          energy_terms)
from fpsi.verification import ManufacturedSolution, mms_initial_state

HOMOGENEOUS = SourceFunctions(essential=[EssentialBC("u_f", (BoundaryTag.GammaF,)),
                                         EssentialBC("eta", (BoundaryTag.GammaPD,))])


def _mesh(n=3):
    return build_rectangle_coupled_mesh((0.0, 1.0, -1.0, 1.0), 0.0, n, n, n)


@pytest.mark.parametrize("family", ["lower", "higher"])
def test_zero_data_stays_zero(family):
    p = CoupledProblem(_mesh(), family, ProblemCoefficients(), HOMOGENEOUS)
    final, hist = Stepper(p, SolverConfig(dt=0.01, T=0.2)).run()
    assert final.n == 20 and final.max_abs() == 0.0
    assert all(h.kinetic_fluid == 0 and h.elastic == 0 for h in hist)


def test_no_steps_returns_initial():
    p = CoupledProblem(_mesh(2), "lower", ProblemCoefficients(), HOMOGENEOUS)
    init = TimeState.zeros(p.spaces)
    init.p_p[:] = 1.0
    final, hist = Stepper(p, SolverConfig(dt=0.1, T=0.0)).run(init)
    assert final is init and hist == []


def test_runs_are_deterministic():
    c = ProblemCoefficients()
    sol = ManufacturedSolution(c)
    out = []
    for _ in range(2):
        p = CoupledProblem(_mesh(), "lower", c, sol.sources())
        final, _ = Stepper(p, SolverConfig(dt=0.01, T=0.03)).run(mms_initial_state(p, sol, 0.01))
        out.append(final.vector())
    np.testing.assert_array_equal(out[0], out[1])


@pytest.mark.parametrize("family", ["lower", "higher"])
def test_manufactured_step_residual(family):
    c = ProblemCoefficients()
    sol = ManufacturedSolution(c)
    p = CoupledProblem(_mesh(), family, c, sol.sources())
    st = Stepper(p, SolverConfig(dt=1e-3, T=1e-3))
    init = mms_initial_state(p, sol, 1e-3)
    new, diag = st.step(init)
    sys_ = st.system(init)
    r = sys_.matrix @ new.vector() - sys_.rhs
    assert np.linalg.norm(r) < 1e-10 * np.linalg.norm(sys_.rhs)
    assert max(diag.conservation.values()) < 1e-12


def _energy(d):
    return d.kinetic_fluid + d.kinetic_solid + d.elastic + d.storage


@pytest.mark.parametrize("family", ["lower", "higher"])
def test_energy_does_not_grow_without_data(family, rng):
    c = ProblemCoefficients(s0=0.5, xi=0.3)
    p = CoupledProblem(_mesh(), family, c, HOMOGENEOUS)
    dt = 0.01
    init = TimeState.zeros(p.spaces)
    for name in ("eta", "p_p"):
        free = p.free_mask(name)
        getattr(init, name)[free] = 0.1 * rng.normal(size=free.sum())
    init.eta_prev = init.eta.copy()
    prev = init
    e_prev = _energy(energy_terms(p, init, init, dt))
    st = Stepper(p, SolverConfig(dt=dt, T=dt))
    for _ in range(15):
        new, d = st.step(prev)
        e = _energy(d)
        assert e <= e_prev * (1 + 1e-10) + 1e-14
        prev, e_prev = new, e


def test_conservation_recorded():
    c = ProblemCoefficients()
    sol = ManufacturedSolution(c)
    p = CoupledProblem(_mesh(), "lower", c, sol.sources())
    _, hist = Stepper(p, SolverConfig(dt=0.01, T=0.02)).run(mms_initial_state(p, sol, 0.01))
    for h in hist:
        assert set(h.conservation) == {"p_f", "p_p", "lam"}
        assert max(h.conservation.values()) < 1e-8


def test_observer_cadence():
    p = CoupledProblem(_mesh(2), "lower", ProblemCoefficients(), HOMOGENEOUS)
    seen = []
    Stepper(p, SolverConfig(dt=0.1, T=0.7, output_every=3)).run(
        observers=(lambda s, d: seen.append(s.n),))
    assert seen == [3, 6, 7]


@pytest.mark.parametrize("kw", [dict(dt=0.0, T=1.0), dict(dt=2.0, T=2.0), dict(dt=0.3, T=1.0),
                                dict(dt=0.1, T=-1.0), dict(dt=0.1, T=1.0, output_every=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_essential_field_check():
    with pytest.raises(ValueError):
        CoupledProblem(_mesh(2), "lower", ProblemCoefficients(),
                       SourceFunctions(essential=[EssentialBC("p_f", (BoundaryTag.GammaF,))]))


def test_state_vector_order():
    p = CoupledProblem(_mesh(2), "lower", ProblemCoefficients(), HOMOGENEOUS)
    s = TimeState.zeros(p.spaces)
    s.lam[:] = 7.0
    v = s.vector()
    assert len(v) == p.ndofs and np.all(v[p.offsets["lam"]:] == 7.0)
    assert tuple(FIELDS) == ("u_f", "p_f", "u_p", "p_p", "eta", "lam")
