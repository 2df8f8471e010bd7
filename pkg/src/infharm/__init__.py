"""P1 finite elements and p-continuation for vectorial infinity-harmonic maps on (-1, 1)^2."""

from .analysis import (
    PhaseField, angle_field, angle_spread, contour_extract, det_field, image_surface,
    infinity_residuals, ortho_projection, rank_classify, sigma2_integral,
)
from .assembly import assemble, energy
from .cli import RunConfig, exact_eval, run
from .estimator import PhaseAnalyzer, PLaplaceSolver
from .fespace import VectorField, boundary_lift, evaluate, interpolate, l2_project_boundary
from .mesh import TriMesh, make_structured_mesh
from .problems import ExactMap, ProblemSpec, exact_map, make_problem
from .solver import SolverConfig, continue_in_p, newton_solve

__all__ = [
    "PhaseField", "angle_field", "angle_spread", "contour_extract", "det_field", "image_surface",
    "infinity_residuals", "ortho_projection", "rank_classify", "sigma2_integral",
    "assemble", "energy", "RunConfig", "exact_eval", "run", "PhaseAnalyzer", "PLaplaceSolver",
    "VectorField", "boundary_lift", "evaluate", "interpolate", "l2_project_boundary",
    "TriMesh", "make_structured_mesh", "ExactMap", "ProblemSpec", "exact_map", "make_problem",
    "SolverConfig", "continue_in_p", "newton_solve",
]
