"""
Finite-element solver for fluid flow coupled to a poroelastic medium.

Navier-Stokes in the fluid, Biot in the porous solid, coupled through a
Lagrange multiplier for the interface flux.  Backward Euler in time with
the convecting velocity lagged by one step.
"""
from .assembly import EssentialBC, ProblemCoefficients, SourceFunctions
from .benchmark import ArterialConfig, extract_trace, inflow_pressure, run_arterial, write_vtk
from .diagnostics import data_quantities, energy_report, small_data_check
from .elements import ElementKind
from .linalg import LinearSolveError, lu_solve, smallest_singular_estimate
from .mesh import (BoundaryTag, CoupledMesh, MeshError, MeshFormatError, build_channel_mesh,
                   build_rectangle_coupled_mesh, read_mesh, uniform_refine, validate, write_mesh)
from .spaces import FunctionSpace, build_coupled_spaces
from .stepper import CoupledProblem, SolverConfig, StepError, Stepper, TimeState
from .verification import (ErrorTable, ManufacturedSolution, convergence_rate, convergence_study,
                           infsup_check, run_mms)

__version__ = "0.1.0"
