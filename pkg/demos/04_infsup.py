"""
Discrete inf-sup constants.

The MINI pair (P1 plus bubble / P1) and the Darcy pair with the interface
multiplier (RT0 / P0 + P0 on the interface) keep a positive constant
under refinement.  The equal-order P1/P1 pair has spurious pressure modes
and its constant is zero to roundoff.
"""
from fpsi import ElementKind, build_rectangle_coupled_mesh, infsup_check
from fpsi.verification import stokes_infsup

for n in (4, 8, 16):
    mesh = build_rectangle_coupled_mesh((0.0, 1.0, -1.0, 1.0), 0.0, n, n, n)
    est = infsup_check(mesh, "lower")
    eq = stokes_infsup(mesh.fluid, ElementKind.P1, ElementKind.P1)
    print(f"{n:2d}x{n:<2d} cells: fluid MINI {est['beta_f_estimate']:.3f}, "
          f"Darcy+multiplier {est['beta_p_estimate']:.3f}, P1/P1 {eq:.1e}")
