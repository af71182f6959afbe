"""Fixed-point solvers for the convex-envelope equation.

The Dirichlet problem ``lambda_1[u] = 0`` is solved by sweeping a closed-form
local update: at every interior node, the smallest over stencil directions of
the value that makes the second difference vanish.  The obstacle form adds a
pointwise cap ``u <= g``.  Starting from the constant ``min g`` (a
subsolution) the iterates increase monotonically to the fixed point.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .problem import BoundaryProblem, ConfigError, Grid2D
from .stencil import DirectionalStep, DirectionSet, StencilTable, build_table

logger = logging.getLogger(__name__)


class Sweep(enum.Enum):
    JACOBI = "jacobi"
    GAUSS_SEIDEL = "gauss-seidel"


class Init(enum.Enum):
    CONSTANT_MIN_G = "min-g"
    ZERO = "zero"
    OBSTACLE = "obstacle"


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 100_000
    sweep: Sweep = Sweep.GAUSS_SEIDEL
    init: Init = Init.CONSTANT_MIN_G

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigError(f"max_iter must be a positive integer, got {self.max_iter}")


def refinement_tol(h: float, scale: float = 1.0) -> float:
    """Update tolerance ``scale * h**4`` for refinement studies.

    The sweep contracts like ``1 - O(h^2)``, so stopping on an update of
    size ``tol`` leaves an iteration error of order ``tol / h^2``.  Tying the
    tolerance to ``h^4`` keeps that error at ``O(h^2)``.
    """
    return scale * h**4


@dataclass(eq=False)
class SolutionField:
    """Grid function with convergence metadata.

    ``values`` has the grid's shape with NaN at exterior nodes.
    """

    grid: Grid2D
    values: np.ndarray
    iterations: int = 0
    final_residual: float = math.nan
    converged: bool = False
    residual_history: np.ndarray = field(default_factory=lambda: np.empty(0))
    tol: float = math.nan
    stencil: StencilTable | None = field(default=None, repr=False)

    @property
    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.interior]

    @property
    def contraction(self) -> float:
        """Observed per-sweep contraction factor over the last few sweeps."""
        hist = self.residual_history
        m = min(10, len(hist) - 1)
        if m < 1 or hist[-1 - m] <= 0 or hist[-1] <= 0:
            return 0.0
        return float((hist[-1] / hist[-1 - m]) ** (1.0 / m))

    @property
    def error_bound(self) -> float:
        """A-posteriori bound on the distance to the fixed point.

        Geometric tail estimate ``update * rho / (1 - rho)``.
        """
        rho = self.contraction
        if rho >= 1.0:
            return math.inf
        return float(self.final_residual * rho / (1.0 - rho))


def local_update(steps: Sequence[DirectionalStep]) -> float:
    """Smallest over directions of the value making the second difference vanish."""
    if not steps:
        raise ValueError("local_update needs at least one direction")
    return min((s.h_minus * s.forward_value + s.k_plus * s.backward_value) / (s.h_minus + s.k_plus)
               for s in steps)


def _initial(table: StencilTable, cfg: SolverConfig, obstacle=None) -> np.ndarray:
    if cfg.init is Init.OBSTACLE:
        if obstacle is None:
            raise ConfigError("init 'obstacle' needs an obstacle problem")
        return obstacle.copy()
    if cfg.init is Init.ZERO:
        return np.zeros(table.size)
    low = table.boundary_values().min()
    if obstacle is not None:
        low = min(low, obstacle.min())
    return np.full(table.size, low)


def _run(table: StencilTable, cfg: SolverConfig, u0: np.ndarray, kind: int,
         obstacle=None, perp=None, gamma=1.0, Gamma=1.0) -> SolutionField:
    u = np.ascontiguousarray(u0, dtype=float).copy()
    history = np.zeros(int(cfg.max_iter))
    obs = np.zeros(0) if obstacle is None else np.ascontiguousarray(obstacle, dtype=float)
    prp = np.zeros(0, dtype=np.int64) if perp is None else np.ascontiguousarray(perp)
    it = _kernels.run_sweeps(
        kind, u, table.fwd_idx, table.fwd_len, table.fwd_val,
        table.bwd_idx, table.bwd_len, table.bwd_val, obs, obstacle is not None,
        prp, float(gamma), float(Gamma), cfg.sweep is Sweep.JACOBI, float(cfg.tol),
        int(cfg.max_iter), history)
    history = history[:it].copy()
    final = float(history[-1])
    converged = final <= cfg.tol
    if not converged:
        logger.warning("no convergence after %d sweeps (update %.3e > tol %.3e)", it, final, cfg.tol)
    return SolutionField(table.grid, table.to_grid(u), it, final, converged, history,
                         cfg.tol, table)


def solve_dirichlet(problem: BoundaryProblem, grid: Grid2D, dirs: DirectionSet,
                    cfg: SolverConfig | None = None, table: StencilTable | None = None) -> SolutionField:
    """Solve ``lambda_1[u] = 0`` with ``u = g`` entering through truncated steps."""
    cfg = cfg or SolverConfig()
    if grid.domain != problem.domain:
        raise ConfigError("grid and problem use different domains")
    table = table or build_table(grid, dirs, problem.datum)
    return _run(table, cfg, _initial(table, cfg), kind=0)


def solve_obstacle(obstacle_fn: Callable, grid: Grid2D, dirs: DirectionSet,
                   cfg: SolverConfig | None = None) -> SolutionField:
    """Solve ``max(u - g, -lambda_1[u]) = 0`` on the closed domain.

    ``obstacle_fn`` is vectorized over ``(..., 2)`` points; its boundary
    values act as Dirichlet data.  The default start is the obstacle itself,
    a supersolution, so the iterates decrease and convex obstacles are
    fixed after one sweep.
    """
    cfg = cfg or SolverConfig(init=Init.OBSTACLE)
    table = build_table(grid, dirs, obstacle_fn)
    P = grid.node_point(0, 0) + grid.h * table.nodes.astype(float)
    obs = np.asarray(obstacle_fn(P), dtype=float)
    if not np.all(np.isfinite(obs)):
        raise ConfigError("obstacle must be finite at every interior node")
    return _run(table, cfg, _initial(table, cfg, obs), kind=0, obstacle=obs)


def concave_envelope(problem: BoundaryProblem, grid: Grid2D, dirs: DirectionSet,
                     cfg: SolverConfig | None = None) -> SolutionField:
    """Concave envelope via ``-convex_envelope(-g)``."""
    cfg = cfg or SolverConfig()
    table = build_table(grid, dirs, _Negated(problem.datum))
    f = _run(table, cfg, _initial(table, cfg), kind=0)
    f.values = -f.values
    f.stencil = None
    return f


class _Negated:
    def __init__(self, fn):
        self.fn = fn

    def __call__(self, pts):
        return -np.asarray(self.fn(pts))


def residual_field(field: SolutionField, datum=None, dirs: DirectionSet | None = None) -> np.ndarray:
    """Discrete ``lambda_1`` at every interior node (NaN elsewhere).

    Uses the stencil the field was solved on unless ``datum`` and ``dirs``
    are given.
    """
    table = field.stencil
    if datum is not None or table is None or (dirs is not None and dirs is not table.dirs):
        if datum is None or dirs is None:
            raise ValueError("field carries no stencil; pass datum and dirs")
        table = build_table(field.grid, dirs, datum)
    D = table.second_differences(table.from_grid(field.values))
    return table.to_grid(D.min(axis=1))


def _fmt(v: float) -> str:
    return "" if not np.isfinite(v) else f"{v:.17g}"


def write_field_csv(path, field_or_values, grid: Grid2D | None = None) -> None:
    """``i,j,x,y,u`` rows over all nodes, exterior values left empty."""
    values = getattr(field_or_values, "values", field_or_values)
    grid = grid or field_or_values.grid
    xs, ys = grid.x, grid.y
    lines = ["i,j,x,y,u"]
    for i in range(grid.n):
        for j in range(grid.n):
            lines.append(f"{i},{j},{xs[i]:.17g},{ys[j]:.17g},{_fmt(values[i, j])}")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_residuals_csv(path, field: SolutionField) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("iter,residual\n")
        for k, r in enumerate(field.residual_history, start=1):
            fh.write(f"{k},{r:.17g}\n")
