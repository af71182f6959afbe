import time

import numpy as np
import pytest

from envelope_pde.envelope_solver import SolverConfig, refinement_tol, solve_dirichlet
from envelope_pde.problem import BoundaryDatum, BoundaryProblem, Domain, build_grid
from envelope_pde.stencil import make_directions

SQUARE = Domain.square(1.0)
DISK = Domain.disk(1.0)


def refined_solve(domain, datum, n, width=3):
    """Dirichlet solve with the h**4 update tolerance; returns (field, seconds)."""
    grid = build_grid(domain, n)
    cfg = SolverConfig(tol=refinement_tol(grid.h), max_iter=2_000_000)
    t0 = time.perf_counter()
    f = solve_dirichlet(BoundaryProblem(domain, datum), grid, make_directions(width), cfg)
    return f, time.perf_counter() - t0


@pytest.fixture(scope="session")
def saddle_ladder():
    """Saddle on the unit square, width 3, n in {33, 65, 129}."""
    return {n: refined_solve(SQUARE, BoundaryDatum.saddle(), n) for n in (33, 65, 129)}


@pytest.fixture(scope="session")
def powercone_ladder():
    """PowerCone(0.1) on the unit disk, width 3, n in {129, 257}."""
    return {n: refined_solve(DISK, BoundaryDatum.powercone(0.1), n) for n in (129, 257)}


@pytest.fixture(scope="session")
def saddle65():
    grid = build_grid(SQUARE, 65)
    return solve_dirichlet(BoundaryProblem(SQUARE, BoundaryDatum.saddle()), grid, make_directions(3))


def half_ball(grid):
    return grid.interior & (np.hypot(*grid.coords().transpose(2, 0, 1)) < 0.5)
