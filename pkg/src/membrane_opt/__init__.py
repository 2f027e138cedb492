"""Finite-element solvers for optimal membrane reinforcement."""

import os

# must run before numpy loads its BLAS
_threads = os.environ.get("MEMBRANE_OPT_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

from .analysis import energy_report, extract_free_boundary, obstacle_check
from .errors import MembraneError, MeshError, MeshParseError, SolverError
from .fem import FemSystem, assemble, dirichlet_energy, element_gradients, poisson_solve
from .mesh import DomainSpec, Mesh, distance_to_boundary, generate, load_mesh, save_mesh
from .oracle import RadialSolution, radial_solution, solve_am, theta_bar, u_bar
from .solver_minimax import BarrierConfig, ConstrainedSolution, solve_constrained
from .solver_p import PConfig, PSolution, continuation, minimize_Fp

__all__ = [
    "BarrierConfig", "ConstrainedSolution", "DomainSpec", "FemSystem", "MembraneError",
    "Mesh", "MeshError", "MeshParseError", "PConfig", "PSolution", "RadialSolution",
    "SolverError", "assemble", "continuation", "dirichlet_energy", "distance_to_boundary",
    "element_gradients", "energy_report", "extract_free_boundary", "generate", "load_mesh",
    "minimize_Fp", "obstacle_check", "poisson_solve", "radial_solution", "save_mesh",
    "solve_am", "solve_constrained", "theta_bar", "u_bar",
]
