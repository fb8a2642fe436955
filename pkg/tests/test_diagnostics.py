import math

import numpy as np
import pytest

from fpsi.assembly import ProblemCoefficients, SourceFunctions
from fpsi.diagnostics import data_quantities, energy_report, l2_norm_sq, small_data_check
from fpsi.mesh import build_rectangle_coupled_mesh
from fpsi.stepper import CoupledProblem, SolverConfig, Stepper
from fpsi.verification import ManufacturedSolution, run_mms
from test_stepper import HOMOGENEOUS


def _mesh(n=2):
    return build_rectangle_coupled_mesh((0.0, 1.0, -1.0, 1.0), 0.0, n, n, n)


def test_sine_norm(small_pair):
    v = l2_norm_sq(small_pair.fluid, lambda x, y, t: np.sin(math.pi * x), 0.0)
    assert math.sqrt(v) == pytest.approx(1 / math.sqrt(2), abs=1e-10)


def test_zero_sources_trivially_small():
    p = CoupledProblem(_mesh(), "lower", ProblemCoefficients(), HOMOGENEOUS)
    rep = small_data_check(p, 0.1, 5)
    assert rep.satisfied and rep.worst == 0.0
    assert np.all(rep.data.C1 == 0) and np.all(rep.data.C2 == 0) and rep.data.C4 == 0


def _scaled_sources(s):
    sol = ManufacturedSolution(ProblemCoefficients())
    return SourceFunctions(f_f=lambda x, y, t: s * sol.f_f(x, y, t),
                           f_p=lambda x, y, t: s * sol.f_p(x, y, t),
                           q_p=lambda x, y, t: s * sol.q_p(x, y, t),
                           essential=HOMOGENEOUS.essential)


def test_quadratic_scaling():
    c = ProblemCoefficients()
    d1 = data_quantities(CoupledProblem(_mesh(), "lower", c, _scaled_sources(1.0)), 0.05, 4)
    d3 = data_quantities(CoupledProblem(_mesh(), "lower", c, _scaled_sources(3.0)), 0.05, 4)
    np.testing.assert_allclose(d3.C1, 9 * d1.C1, rtol=1e-12)
    np.testing.assert_allclose(d3.C2, 9 * d1.C2, rtol=1e-12)
    assert d3.C4 == pytest.approx(9 * d1.C4, rel=1e-12)


def test_manufactured_data_report():
    c = ProblemCoefficients()
    p = CoupledProblem(_mesh(), "lower", c, ManufacturedSolution(c).sources())
    rep = small_data_check(p, 0.01, 3)
    assert rep.lhs.shape == (3,) and np.all(np.isfinite(rep.lhs))
    assert rep.rhs == pytest.approx(0.25)
    with pytest.raises(ValueError):
        small_data_check(p, 0.01, 3, S_f=0.0)


def test_zero_run_energy():
    c = ProblemCoefficients()
    p = CoupledProblem(_mesh(), "lower", c, HOMOGENEOUS)
    _, hist = Stepper(p, SolverConfig(dt=0.1, T=0.5)).run()
    rep = energy_report(hist, data_quantities(p, 0.1, 5), c, 0.1)
    assert rep.satisfied and np.all(rep.lhs == 0) and rep.min_margin == 1.0


def test_manufactured_run_energy_bound():
    r = run_mms(1 / 4, "lower", dt=0.01, T=0.05)
    d = data_quantities(r.problem, 0.01, len(r.history))
    rep = energy_report(r.history, d, r.problem.coefficients, 0.01, initial=r.initial_energy)
    assert rep.satisfied and rep.min_margin > 0


def test_energy_history_length_check():
    c = ProblemCoefficients()
    p = CoupledProblem(_mesh(), "lower", c, HOMOGENEOUS)
    _, hist = Stepper(p, SolverConfig(dt=0.1, T=0.2)).run()
    with pytest.raises(ValueError):
        energy_report(hist, data_quantities(p, 0.1, 3), c, 0.1)
