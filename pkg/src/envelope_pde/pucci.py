"""Pucci minimal operator and its approach to the convex envelope.

``pucci_minimal_value`` is ``-(gamma * sum(positive eigenvalues) + Gamma *
sum(negative eigenvalues))``.  The discrete operator replaces the eigenvalue
pair by second differences along an orthogonal pair of lattice directions
and minimizes the ``gamma``/``Gamma``-weighted sum over pairs, which
approaches the ``lambda_1`` scheme as ``Gamma / gamma`` grows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .problem import BoundaryProblem, ConfigError, Grid2D
from .envelope_solver import SolutionField, SolverConfig, _initial, _run
from .stencil import DirectionSet, StencilTable, build_table


@dataclass(frozen=True)
class PucciParams:
    gamma: float
    Gamma: float
    dim: int = 2

    def __post_init__(self):
        if not (self.gamma > 0 and self.Gamma > 0):
            raise ConfigError("ellipticity constants must be positive")
        if not self.gamma <= self.dim * self.Gamma:
            raise ConfigError(f"need gamma <= {self.dim} * Gamma")

    @property
    def ratio(self) -> float:
        return self.Gamma / self.gamma


def pucci_minimal_value(lams: Sequence[float], params: PucciParams) -> float:
    lams = np.asarray(lams, dtype=float)
    pos = lams[lams > 0].sum()
    neg = lams[lams < 0].sum()
    return float(-(params.gamma * pos + params.Gamma * neg))


def discrete_pucci(table: StencilTable, u_int: np.ndarray, params: PucciParams) -> np.ndarray:
    """Discrete ``M^-`` at interior nodes: the largest pair value of ``-(gamma D+ + Gamma D-)``.

    Equivalently minus the smallest ``gamma``/``Gamma``-weighted sum over
    orthogonal pairs of second differences.
    """
    D = table.second_differences(u_int)
    phi = params.gamma * np.maximum(D, 0.0) + params.Gamma * np.minimum(D, 0.0)
    perp = table.dirs.perp
    first = np.flatnonzero(perp > np.arange(len(perp)))
    pair_sums = phi[:, first] + phi[:, perp[first]]
    return -pair_sums.min(axis=1)


def solve_pucci_min(problem: BoundaryProblem, grid: Grid2D, dirs: DirectionSet,
                    params: PucciParams, cfg: SolverConfig | None = None,
                    table: StencilTable | None = None) -> SolutionField:
    """Solve ``M^-[u] = 0`` with Dirichlet data by closed-form nodal updates."""
    cfg = cfg or SolverConfig()
    table = table or build_table(grid, dirs, problem.datum)
    return _run(table, cfg, _initial(table, cfg), kind=1, perp=dirs.perp,
                gamma=params.gamma, Gamma=params.Gamma)


def interior_core(grid: Grid2D, margin_cells: float = 3.0) -> np.ndarray:
    """Interior nodes at least ``margin_cells * h`` from the boundary."""
    dist = grid.domain.distance_to_boundary(grid.coords())
    return grid.interior & (dist >= margin_cells * grid.h - 1e-12)


def ratio_sweep(problem: BoundaryProblem, grid: Grid2D, dirs: DirectionSet, gamma: float,
                Gammas: Sequence[float], cfg: SolverConfig | None = None,
                envelope: SolutionField | np.ndarray | None = None,
                return_fields: bool = False):
    """Sup distance to the envelope for increasing ``Gamma / gamma``.

    Distances are taken over nodes at least ``3h`` from the boundary.  The
    reference envelope defaults to the exact oracle on a 256-point trace.
    """
    if any(b <= a for a, b in zip(Gammas, Gammas[1:])):
        raise ConfigError("Gammas must be strictly increasing")
    if envelope is None:
        from .oracle import envelope_grid
        from .problem import sample_boundary
        envelope = envelope_grid(grid, sample_boundary(problem.domain, problem.datum, 256))
    ref = getattr(envelope, "values", envelope)
    core = interior_core(grid)
    table = build_table(grid, dirs, problem.datum)
    rows, fields = [], []
    for G in Gammas:
        f = solve_pucci_min(problem, grid, dirs, PucciParams(gamma, G), cfg, table)
        rows.append((G / gamma, float(np.nanmax(np.abs(f.values - ref)[core]))))
        fields.append(f)
    return (rows, fields) if return_fields else rows


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("ratio,sup_distance\n")
        for r, d in rows:
            fh.write(f"{r:.17g},{d:.17g}\n")
