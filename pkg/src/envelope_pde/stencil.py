"""Wide-stencil second directional differences.

The minimum over lattice directions of the nonuniform three-point second
difference approximates the smallest Hessian eigenvalue.  Steps that would
leave the domain are truncated at the exact boundary crossing and pick up the
Dirichlet value there.

:func:`build_table` precomputes neighbour indices, step lengths and boundary
values for every interior node and direction so that the iterative solvers
never recompute geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .problem import BoundaryDatum, ConfigError, Grid2D, NodeKind

MAX_WIDTH = 8


@dataclass(frozen=True, eq=False)
class DirectionSet:
    """Coprime lattice offsets, one per antipodal pair.

    ``offsets[k]`` is an integer ``(p, q)``; ``perp[k]`` indexes the member
    of the set orthogonal to it.  ``dtheta`` is the worst angular distance
    from an arbitrary direction to the nearest stencil direction.
    """

    width: int
    offsets: np.ndarray
    perp: np.ndarray
    dtheta: float

    def __len__(self) -> int:
        return len(self.offsets)

    @property
    def units(self) -> np.ndarray:
        o = self.offsets.astype(float)
        return o / np.hypot(o[:, 0], o[:, 1])[:, None]

    @property
    def lattice_lengths(self) -> np.ndarray:
        o = self.offsets.astype(float)
        return np.hypot(o[:, 0], o[:, 1])

    def index(self, offset) -> int:
        p, q = int(offset[0]), int(offset[1])
        for k, (a, b) in enumerate(self.offsets):
            if (a, b) == (p, q) or (a, b) == (-p, -q):
                return k
        raise KeyError(f"offset {(p, q)} not in direction set")


def _canonical(p: int, q: int) -> tuple[int, int]:
    return (p, q) if p > 0 or (p == 0 and q > 0) else (-p, -q)


def make_directions(width: int) -> DirectionSet:
    """All coprime offsets with ``|p| + |q| <= width``, antipodes removed.

    Width 1 gives the two axes, width 2 adds the diagonals, width 3 adds the
    knight moves (8 directions in total).
    """
    if int(width) != width or not 1 <= width <= MAX_WIDTH:
        raise ConfigError(f"stencil width must be an integer in [1, {MAX_WIDTH}], got {width}")
    width = int(width)
    offs: list[tuple[int, int]] = [(1, 0), (0, 1)]
    for L in range(2, width + 1):
        ring = [(p, L - p) for p in range(1, L) if math.gcd(p, L - p) == 1]
        offs += ring + [(p, -q) for p, q in ring]
    index = {o: k for k, o in enumerate(offs)}
    perp = np.array([index[_canonical(-q, p)] for p, q in offs], dtype=np.int64)

    ang = np.sort(np.mod([math.atan2(q, p) for p, q in offs], math.pi))
    gaps = np.diff(np.concatenate([ang, [ang[0] + math.pi]]))
    offsets = np.array(offs, dtype=np.int64)
    offsets.setflags(write=False)
    return DirectionSet(width, offsets, perp, float(gaps.max() / 2))


@dataclass(frozen=True)
class DirectionalStep:
    v: np.ndarray
    k_plus: float
    h_minus: float
    forward_value: float
    backward_value: float
    forward_on_boundary: bool
    backward_on_boundary: bool


def _values(field) -> np.ndarray:
    return np.asarray(getattr(field, "values", field), dtype=float)


def directional_step(field, grid: Grid2D, datum: BoundaryDatum, node, offset) -> DirectionalStep:
    """Forward/backward neighbours of interior ``node`` along lattice ``offset``."""
    i, j = int(node[0]), int(node[1])
    if grid.mask[i, j] != NodeKind.INTERIOR:
        raise ValueError(f"node {(i, j)} is not interior")
    u = _values(field)
    p, q = int(offset[0]), int(offset[1])
    full = math.hypot(p, q) * grid.h
    v = np.array([p, q], dtype=float) / math.hypot(p, q)
    x = grid.node_point(i, j)
    out = []
    for sgn in (1, -1):
        a, b = i + sgn * p, j + sgn * q
        if 0 <= a < grid.n and 0 <= b < grid.n and grid.mask[a, b] == NodeKind.INTERIOR:
            out.append((full, float(u[a, b]), False))
        else:
            w = sgn * v
            t = min(float(grid.domain.ray_exit(x, w)), full)
            y = grid.domain.snap(x + t * w)
            out.append((t, float(datum(y)), True))
    (k, fv, fb), (hm, bv, bb) = out
    return DirectionalStep(v, k, hm, fv, bv, fb, bb)


def second_difference(step: DirectionalStep, center_value: float) -> float:
    """Nonuniform three-point second difference, exact on quadratics."""
    k, h = step.k_plus, step.h_minus
    return 2.0 / (h + k) * ((step.forward_value - center_value) / k
                            + (step.backward_value - center_value) / h)


#: second differences closer than this many rounding units count as tied
TIE_ULPS = 1e6


def tied_argmin(D: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Lowest index within rounding of the row minimum.

    ``scale`` bounds the rounding error of each entry in ``D`` (up to the
    factor ``TIE_ULPS * eps``); entries that close to the minimum count as
    tied so that exact ties decided by float noise still go to index 0.
    """
    D = np.atleast_2d(D)
    tol = TIE_ULPS * np.finfo(float).eps * np.atleast_2d(scale).max(axis=1, keepdims=True)
    return np.argmax(D <= D.min(axis=1, keepdims=True) + tol, axis=1)


def _step_scale(step: DirectionalStep, c: float) -> float:
    k, h = step.k_plus, step.h_minus
    return 2.0 / (h * k) * (abs(step.forward_value) + abs(step.backward_value) + abs(c))


def _node_differences(field, grid, datum, node, dirs):
    u = _values(field)
    c = float(u[node[0], node[1]])
    steps = [directional_step(u, grid, datum, node, o) for o in dirs.offsets]
    vals = np.array([second_difference(s, c) for s in steps])
    scale = np.array([_step_scale(s, c) for s in steps])
    return vals, int(tied_argmin(vals, scale)[0])


def lambda1_approx(field, grid, datum, node, dirs: DirectionSet):
    """Smallest second difference over ``dirs`` and the offset attaining it.

    Ties, up to rounding, go to the lowest direction index.
    """
    vals, k = _node_differences(field, grid, datum, node, dirs)
    return float(vals[k]), tuple(int(t) for t in dirs.offsets[k])


def eigen_pair_approx(field, grid, datum, node, dirs: DirectionSet):
    """Approximate ``(lambda_1, lambda_2)``: the minimum and its orthogonal partner."""
    vals, k = _node_differences(field, grid, datum, node, dirs)
    return float(vals[k]), float(vals[dirs.perp[k]])


@dataclass(frozen=True, eq=False)
class StencilTable:
    """Per-node, per-direction stencil geometry for the interior of a grid.

    Arrays are ``(n_interior, n_dirs)``.  ``*_idx`` is the interior index of
    the neighbour or -1 when the step was truncated, in which case ``*_val``
    holds the boundary datum at the crossing.
    """

    grid: Grid2D
    dirs: DirectionSet
    nodes: np.ndarray
    index: np.ndarray
    fwd_idx: np.ndarray
    fwd_len: np.ndarray
    fwd_val: np.ndarray
    bwd_idx: np.ndarray
    bwd_len: np.ndarray
    bwd_val: np.ndarray

    @property
    def size(self) -> int:
        return len(self.nodes)

    def gather(self, u_int: np.ndarray):
        """Forward and backward values for an interior vector ``u_int``."""
        f = np.where(self.fwd_idx >= 0, u_int[np.maximum(self.fwd_idx, 0)], self.fwd_val)
        b = np.where(self.bwd_idx >= 0, u_int[np.maximum(self.bwd_idx, 0)], self.bwd_val)
        return f, b

    def rounding_scale(self, u_int: np.ndarray) -> np.ndarray:
        """Per-entry magnitude bounding rounding error in :meth:`second_differences`."""
        f, b = self.gather(u_int)
        k, h = self.fwd_len, self.bwd_len
        return 2.0 / (h * k) * (np.abs(f) + np.abs(b) + np.abs(u_int)[:, None])

    def second_differences(self, u_int: np.ndarray) -> np.ndarray:
        f, b = self.gather(u_int)
        k, h = self.fwd_len, self.bwd_len
        c = u_int[:, None]
        return 2.0 / (h + k) * ((f - c) / k + (b - c) / h)

    def boundary_values(self) -> np.ndarray:
        """All Dirichlet values reachable from the interior."""
        return np.concatenate([self.fwd_val[self.fwd_idx < 0], self.bwd_val[self.bwd_idx < 0]])

    def to_grid(self, u_int: np.ndarray) -> np.ndarray:
        out = np.full(self.grid.shape, np.nan)
        out[self.nodes[:, 0], self.nodes[:, 1]] = u_int
        return out

    def from_grid(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float)[self.nodes[:, 0], self.nodes[:, 1]].copy()


def build_table(grid: Grid2D, dirs: DirectionSet, boundary_fn: Callable) -> StencilTable:
    """Precompute the stencil for every interior node.

    ``boundary_fn`` maps an ``(..., 2)`` array of boundary points to values.
    """
    nodes = grid.interior_indices()
    if len(nodes) == 0:
        raise ConfigError("grid has no interior nodes")
    index = np.full(grid.shape, -1, dtype=np.int64)
    index[nodes[:, 0], nodes[:, 1]] = np.arange(len(nodes))
    X = grid.node_point(0, 0) + grid.h * nodes.astype(float)
    nd = len(dirs)
    arrays = {}
    for name, sgn in (("fwd", 1), ("bwd", -1)):
        idx = np.empty((len(nodes), nd), dtype=np.int64)
        ln = np.empty((len(nodes), nd))
        val = np.zeros((len(nodes), nd))
        for d, (p, q) in enumerate(dirs.offsets):
            a = nodes[:, 0] + sgn * p
            b = nodes[:, 1] + sgn * q
            inside = (a >= 0) & (a < grid.n) & (b >= 0) & (b < grid.n)
            nb = np.full(len(nodes), -1, dtype=np.int64)
            nb[inside] = index[a[inside], b[inside]]
            full = math.hypot(p, q) * grid.h
            idx[:, d] = nb
            ln[:, d] = full
            cut = nb < 0
            if np.any(cut):
                w = sgn * np.array([p, q], dtype=float) / math.hypot(p, q)
                t = np.minimum(grid.domain.ray_exit(X[cut], w), full)
                y = grid.domain.snap(X[cut] + t[:, None] * w)
                ln[cut, d] = t
                val[cut, d] = boundary_fn(y)
        arrays[name] = (idx, ln, val)
    if np.any(arrays["fwd"][1] <= 0) or np.any(arrays["bwd"][1] <= 0):
        raise ConfigError("zero-length stencil step; an interior node sits on the boundary")
    return StencilTable(grid, dirs, nodes, index, *arrays["fwd"], *arrays["bwd"])
