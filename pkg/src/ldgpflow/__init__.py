"""Local discontinuous Galerkin solver for steady p-Navier-Stokes flow.

Modules, bottom up:

- ``nfunctions``: the N-functions phi_{p,delta}, shifts and conjugates
- ``constitutive``: extra stress S, its tangent and the F / F* transforms
- ``mesh``: square triangulations, red refinement, face topology
- ``femspace``: broken and continuous P_k spaces, quadrature, projection
- ``dgops``: traces, liftings, DG gradient/divergence, DG norms
- ``system``: residual, Jacobian and Newton solver of the discrete problem
- ``verification``: manufactured solutions, errors, convergence studies
- ``cli``: the ``ldgpflow`` command
"""
from .constitutive import StressLaw, stress
from .mesh import Mesh, generate_square_mesh, red_refine
from .nfunctions import NFunctionParams
from .system import DiscreteSpaces, Model, NewtonOptions, ProblemData, newton_solve
from .verification import StudyConfig, make_manufactured, run_convergence_study

__all__ = [
    "DiscreteSpaces",
    "Mesh",
    "Model",
    "NFunctionParams",
    "NewtonOptions",
    "ProblemData",
    "StressLaw",
    "StudyConfig",
    "generate_square_mesh",
    "make_manufactured",
    "newton_solve",
    "red_refine",
    "run_convergence_study",
    "stress",
]

__version__ = "0.1.0"
