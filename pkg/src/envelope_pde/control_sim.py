"""Monte Carlo for the controlled diffusion ``dx = sqrt(2) theta dw``.

A single scalar Brownian motion drives the process along the unit control
direction ``theta(x)``; the run stops on the boundary and pays ``g`` there.
Path ``k`` of an estimate uses seed ``seed + k`` so any subset of paths can
be reproduced on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import ndimage

from .problem import BoundaryDatum, Domain, Grid2D, Shape
from .envelope_solver import SolutionField
from .stencil import DirectionSet, build_table, tied_argmin

STEP_CAP = 10_000_000


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ControlPolicy:
    """Either one fixed direction or a per-node direction field.

    ``field`` has shape ``(n, n, 2)`` over ``grid``; every node, exterior
    ones included, carries a unit vector so nearest-node lookup never fails.
    """

    direction: np.ndarray | None = None
    grid: Grid2D | None = None
    field: np.ndarray | None = None
    label: str = ""

    @classmethod
    def fixed(cls, theta, label: str | None = None) -> "ControlPolicy":
        th = np.asarray(theta, dtype=float)
        th = th / np.hypot(*th)
        return cls(direction=th, label=label or f"fixed {th[0]:.6g} {th[1]:.6g}")

    @property
    def is_fixed(self) -> bool:
        return self.direction is not None

    def at(self, x) -> np.ndarray:
        if self.is_fixed:
            return self.direction
        i, j = self.grid.nearest_node(x)
        return self.field[i, j]


@dataclass(frozen=True)
class PathResult:
    exit_point: np.ndarray
    exit_cost: float
    steps: int
    exit_time: float


@dataclass(frozen=True)
class ValueEstimate:
    mean: float
    stderr: float
    n_paths: int


def policy_from_solution(field: SolutionField, dirs: DirectionSet | None = None,
                         datum: BoundaryDatum | None = None) -> ControlPolicy:
    """Feedback control along the minimizing stencil direction at each node."""
    table = field.stencil
    if table is None or (dirs is not None and dirs is not table.dirs):
        if dirs is None or datum is None:
            raise ValueError("field carries no stencil; pass dirs and datum")
        table = build_table(field.grid, dirs, datum)
    u = table.from_grid(field.values)
    units = table.dirs.units[tied_argmin(table.second_differences(u), table.rounding_scale(u))]
    grid = field.grid
    vec = np.full(grid.shape + (2,), np.nan)
    vec[table.nodes[:, 0], table.nodes[:, 1]] = units
    # exterior nodes copy their nearest interior node
    _, (ii, jj) = ndimage.distance_transform_edt(~grid.interior, return_indices=True)
    vec = vec[ii, jj]
    vec.setflags(write=False)
    return ControlPolicy(grid=grid, field=vec, label="feedback")


def _domain_code(domain: Domain):
    return (0 if domain.shape is Shape.DISK else 1, domain.size, domain.center[0], domain.center[1])


@njit(cache=True)
def _level(shape, r, cx, cy, x, y):
    if shape == 0:
        return math.hypot(x - cx, y - cy) - r
    return max(abs(x - cx), abs(y - cy)) - r


@njit(cache=True)
def _crossing(shape, r, cx, cy, x, y, dx, dy):
    """Fraction of the step ``(dx, dy)`` from interior ``(x, y)`` at which it exits."""
    if shape == 0:
        ox = x - cx
        oy = y - cy
        a = dx * dx + dy * dy
        b = ox * dx + oy * dy
        c = ox * ox + oy * oy - r * r
        disc = max(b * b - a * c, 0.0)
        return min(max((-b + math.sqrt(disc)) / a, 0.0), 1.0)
    t = 1.0
    ox = x - cx
    oy = y - cy
    if dx > 0:
        t = min(t, (r - ox) / dx)
    elif dx < 0:
        t = min(t, (-r - ox) / dx)
    if dy > 0:
        t = min(t, (r - oy) / dy)
    elif dy < 0:
        t = min(t, (-r - oy) / dy)
    return max(t, 0.0)


@njit(cache=True)
def _walk(x, y, fixed, thx, thy, field, ox, oy, h, n, shape, r, cx, cy, sdt, seed, cap):
    np.random.seed(seed)
    steps = 0
    while steps < cap:
        if fixed:
            tx = thx
            ty = thy
        else:
            i = min(max(int(round((x - ox) / h)), 0), n - 1)
            j = min(max(int(round((y - oy) / h)), 0), n - 1)
            tx = field[i, j, 0]
            ty = field[i, j, 1]
        xi = np.random.standard_normal() * sdt
        nx = x + xi * tx
        ny = y + xi * ty
        steps += 1
        if _level(shape, r, cx, cy, nx, ny) >= 0.0:
            t = _crossing(shape, r, cx, cy, x, y, nx - x, ny - y)
            return x + t * (nx - x), y + t * (ny - y), steps
        x = nx
        y = ny
    return x, y, -1


@njit(cache=True)
def _walk_many(x, y, fixed, thx, thy, field, ox, oy, h, n, shape, r, cx, cy, sdt, seed, cap,
               n_paths, out_pts, out_steps):
    for k in range(n_paths):
        px, py, s = _walk(x, y, fixed, thx, thy, field, ox, oy, h, n, shape, r, cx, cy,
                          sdt, seed + k, cap)
        out_pts[k, 0] = px
        out_pts[k, 1] = py
        out_steps[k] = s


def _policy_args(policy: ControlPolicy):
    if policy.is_fixed:
        return True, float(policy.direction[0]), float(policy.direction[1]), \
            np.zeros((1, 1, 2)), 0.0, 0.0, 1.0, 1
    g = policy.grid
    return False, 0.0, 0.0, np.ascontiguousarray(policy.field), g.origin[0], g.origin[1], g.h, g.n


def _simulate(x0, policy, dt, domain, seed, n_paths, cap):
    x0 = np.asarray(x0, dtype=float)
    if not bool(domain.is_interior(x0)):
        raise ValueError(f"start point {tuple(x0)} is not interior")
    if not dt > 0:
        raise ValueError("dt must be positive")
    pts = np.empty((n_paths, 2))
    steps = np.empty(n_paths, dtype=np.int64)
    _walk_many(x0[0], x0[1], *_policy_args(policy), *_domain_code(domain),
               math.sqrt(2.0 * dt), int(seed), int(cap), int(n_paths), pts, steps)
    if np.any(steps < 0):
        raise SimulationError(f"path exceeded {cap} steps; dt too small or policy does not exit")
    return domain.snap(pts), steps


def simulate_path(x0, policy: ControlPolicy, dt: float, domain: Domain, datum: BoundaryDatum,
                  seed: int, cap: int = STEP_CAP) -> PathResult:
    pts, steps = _simulate(x0, policy, dt, domain, seed, 1, cap)
    return PathResult(pts[0], float(datum(pts[0])), int(steps[0]), float(steps[0] * dt))


def estimate_value(x0, policy: ControlPolicy, dt: float, n_paths: int, domain: Domain,
                   datum: BoundaryDatum, seed: int, cap: int = STEP_CAP) -> ValueEstimate:
    """Mean exit cost over independent paths and its standard error."""
    if n_paths < 2:
        raise ValueError("need at least 2 paths")
    pts, _ = _simulate(x0, policy, dt, domain, seed, n_paths, cap)
    cost = np.asarray(datum(pts), dtype=float)
    return ValueEstimate(float(cost.mean()), float(cost.std(ddof=1) / math.sqrt(n_paths)), n_paths)


def exit_costs(x0, policy: ControlPolicy, dt: float, n_paths: int, domain: Domain,
               datum: BoundaryDatum, seed: int) -> np.ndarray:
    pts, _ = _simulate(x0, policy, dt, domain, seed, n_paths, STEP_CAP)
    return np.asarray(datum(pts), dtype=float)


def generator_increment(u, x0, theta, t: float, dt: float, n_paths: int, seed: int):
    """Monte Carlo ``E[u(x(t))] - u(x0)`` for a fixed control, ignoring the boundary.

    Returns ``(mean, stderr)``; for smooth ``u`` this is about
    ``t * theta' D2u theta``.
    """
    th = np.asarray(theta, dtype=float)
    th = th / np.hypot(*th)
    rng = np.random.default_rng(seed)
    n_steps = max(1, round(t / dt))
    w = rng.standard_normal((n_paths, n_steps)).sum(axis=1) * math.sqrt(2.0 * t / n_steps)
    x = np.asarray(x0, dtype=float) + w[:, None] * th
    diff = u(x) - u(np.asarray(x0, dtype=float)[None])[0]
    return float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(n_paths))


def write_estimate_csv(path, rows) -> None:
    """Rows are ``(x0, policy_label, ValueEstimate, dt)``."""
    with open(path, "w", newline="") as fh:
        fh.write("x0x,x0y,policy,mean,stderr,n_paths,dt\n")
        for x0, label, est, dt in rows:
            fh.write(f"{x0[0]:.17g},{x0[1]:.17g},{label},{est.mean:.17g},{est.stderr:.17g},"
                     f"{est.n_paths},{dt:.17g}\n")
