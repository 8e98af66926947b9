# Solve once on a fixed mesh, look at the fields, write a VTK file.

from ldgpflow import NewtonOptions, generate_square_mesh, red_refine
from ldgpflow.cli import emit_vtk
from ldgpflow.system import DiscreteSpaces, reconstruct_auxiliary
from ldgpflow.verification import compute_errors, make_manufactured, solve_level

mesh = red_refine(red_refine(generate_square_mesh(4)))
print(mesh.n_cells, "cells, h =", mesh.h)

exact, data = make_manufactured(p=3.0, delta=1e-4, rho=0.1)
spaces = DiscreteSpaces(mesh, k=1)

# no start vector: Newton begins from the linear Stokes solution
res = solve_level(spaces, data, None, NewtonOptions())
print("Newton residuals:", ", ".join(f"{r:.2e}" for r in res.residuals))

aux = reconstruct_auxiliary(res.solution, data, spaces)
rec = compute_errors(res.solution, aux, exact, spaces, level=2, newton_iterations=res.iterations)
print(f"e_L={rec.e_L:.4e}  e_S={rec.e_S:.4e}  e_jump={rec.e_jump:.4e}  e_q={rec.e_q:.4e}")

emit_vtk(res.solution, aux, mesh, "single_solve.vtk")
print("wrote single_solve.vtk (open in ParaView)")
