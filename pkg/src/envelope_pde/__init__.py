"""Convex envelopes of Dirichlet data via the equation ``lambda_1[D2u] = 0``."""

from .envelope_solver import (SolutionField, SolverConfig, Sweep, Init, local_update,
                              refinement_tol, residual_field, solve_dirichlet, solve_obstacle)
from .oracle import envelope_grid, envelope_value
from .problem import (BoundaryDatum, BoundaryProblem, ConfigError, Domain, DomainError, Grid2D,
                      build_grid, sample_boundary)
from .stencil import make_directions

__all__ = [
    "BoundaryDatum", "BoundaryProblem", "ConfigError", "Domain", "DomainError", "Grid2D",
    "Init", "SolutionField", "SolverConfig", "Sweep", "build_grid", "envelope_grid",
    "envelope_value", "local_update", "make_directions", "refinement_tol", "residual_field",
    "sample_boundary", "solve_dirichlet", "solve_obstacle",
]

__version__ = "0.1.0"
