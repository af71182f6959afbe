"""Structural checks on computed envelopes.

Contact segments (every node sits on a segment along which ``u`` is affine
and which reaches the boundary), gradient Hölder quotients inside and near
the boundary, the gap between ``u`` and its boundary data, and the
Monge-Ampère residual ``det D2u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .envelope_solver import SolutionField
from .problem import BoundaryDatum, Grid2D
from .stencil import DirectionSet, StencilTable, build_table


@dataclass(frozen=True)
class ContactReport:
    node: tuple[int, int]
    point: np.ndarray
    flat_dirs: list[tuple[int, int]]
    segment_hit: bool
    boundary_endpoints: list[np.ndarray]
    max_deviation: float


@dataclass(frozen=True)
class HolderReport:
    region: str
    alpha: float
    sup_quotient: float
    witness_pair: tuple[np.ndarray, np.ndarray]
    n_nodes: int
    n_pairs: int


@dataclass(frozen=True)
class GradientField:
    """Per-node gradient, NaN outside the interior.

    ``one_sided`` marks nodes missing a neighbour on some axis; ``kink``
    marks nodes whose left and right slopes disagree by more than the
    threshold on some axis.
    """

    grad: np.ndarray
    one_sided: np.ndarray
    kink: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return np.all(np.isfinite(self.grad), axis=-1)


class Region:
    """A named point predicate over ``(..., 2)`` arrays."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], label: str):
        self.fn = fn
        self.label = label

    def __call__(self, pts) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(pts, dtype=float)), dtype=bool)

    @classmethod
    def ball(cls, center, radius: float, closed: bool = False) -> "Region":
        c = np.asarray(center, dtype=float)
        if closed:
            fn = lambda p: np.hypot(p[..., 0] - c[0], p[..., 1] - c[1]) <= radius
        else:
            fn = lambda p: np.hypot(p[..., 0] - c[0], p[..., 1] - c[1]) < radius
        return cls(fn, f"ball(({c[0]:g},{c[1]:g}),{radius:g})")


def _table(field: SolutionField, datum, dirs) -> StencilTable:
    table = field.stencil
    if table is None or (dirs is not None and dirs is not table.dirs):
        if datum is None or dirs is None:
            raise ValueError("field carries no stencil; pass datum and dirs")
        table = build_table(field.grid, dirs, datum)
    return table


def default_flat_tol(field: SolutionField) -> float:
    """Ten solver tolerances in second-difference units, ``10 * tol * 2 / h^2``."""
    tol = field.tol if np.isfinite(field.tol) and field.tol > 0 else 1e-8
    return 10.0 * tol * 2.0 / field.grid.h**2


def _trace(table, u_int, values, d, sgn, datum, trace_tol):
    """Follow the secant line of direction ``d`` from every node in one orientation.

    Returns (ok, endpoints, max deviation) per node.
    """
    grid = table.grid
    p, q = table.dirs.offsets[d]
    L = math.hypot(p, q) * grid.h
    w = sgn * np.array([p, q], dtype=float) / math.hypot(p, q)
    X = grid.node_point(0, 0) + grid.h * table.nodes.astype(float)
    f, b = table.gather(u_int)
    slope = (f[:, d] - b[:, d]) / (table.fwd_len[:, d] + table.bwd_len[:, d])
    c = u_int
    s_end = grid.domain.ray_exit(X, w)
    steps = np.floor(s_end / L - 1e-9).astype(np.int64)
    ok = np.ones(len(c), dtype=bool)
    dev = np.zeros(len(c))
    live = steps >= 1
    t = 1
    while np.any(live):
        ii = table.nodes[:, 0] + sgn * t * p
        jj = table.nodes[:, 1] + sgn * t * q
        inb = (ii >= 0) & (ii < grid.n) & (jj >= 0) & (jj < grid.n)
        live &= inb
        live[live] &= grid.interior[ii[live], jj[live]]
        v = values[np.where(live, ii, 0), np.where(live, jj, 0)]
        e = np.where(live, np.abs(v - (c + sgn * slope * t * L)), 0.0)
        dev = np.maximum(dev, e)
        ok &= e <= trace_tol
        t += 1
        live &= t <= steps
    Y = grid.domain.snap(X + s_end[:, None] * w)
    e = np.abs(np.asarray(datum(Y), dtype=float) - (c + sgn * slope * s_end))
    dev = np.maximum(dev, e)
    ok &= e <= trace_tol
    return ok, Y, dev


def contact_scan(field: SolutionField, datum: BoundaryDatum, dirs: DirectionSet | None = None,
                 flat_tol: float | None = None, trace_tol: float | None = None) -> list[ContactReport]:
    """Flat directions and contact segments at every interior node.

    A direction is flat where ``|second difference| <= flat_tol``.  Along
    each flat direction the secant line through the node is continued in
    both orientations; the node has a segment hit when in some orientation
    the stored values and finally the datum at the boundary crossing stay
    within ``trace_tol`` of that line.
    """
    grid = field.grid
    table = _table(field, datum, dirs)
    if flat_tol is None:
        flat_tol = default_flat_tol(field)
    if trace_tol is None:
        trace_tol = 5.0 * grid.h * float(np.ptp(table.boundary_values()))
        trace_tol = trace_tol or 5.0 * grid.h
    u_int = table.from_grid(field.values)
    D = table.second_differences(u_int)
    flat = np.abs(D) <= flat_tol
    hit = np.zeros(table.size, dtype=bool)
    dev = np.full(table.size, np.inf)
    ends: list[list[np.ndarray]] = [[] for _ in range(table.size)]
    for d in range(len(table.dirs)):
        if not np.any(flat[:, d]):
            continue
        for sgn in (1, -1):
            ok, Y, dv = _trace(table, u_int, field.values, d, sgn, datum, trace_tol)
            ok &= flat[:, d]
            hit |= ok
            dev = np.where(ok, np.minimum(dev, dv), dev)
            for n in np.flatnonzero(ok):
                if len(ends[n]) < 2:
                    ends[n].append(Y[n])
    X = grid.node_point(0, 0) + grid.h * table.nodes.astype(float)
    offs = table.dirs.offsets
    return [ContactReport((int(i), int(j)), X[n], [offs[d] for d in np.flatnonzero(flat[n])],
                          bool(hit[n]), ends[n], float(dev[n]) if hit[n] else math.nan)
            for n, (i, j) in enumerate(table.nodes)]


def contact_fractions(reports: list[ContactReport], grid: Grid2D, margin_cells: float = 3.0):
    """Fractions of nodes at least ``margin_cells * h`` inside with a flat direction and a hit."""
    P = np.array([r.point for r in reports])
    core = grid.domain.distance_to_boundary(P) >= margin_cells * grid.h - 1e-12
    sel = [r for r, k in zip(reports, core) if k]
    if not sel:
        return math.nan, math.nan
    return (sum(bool(r.flat_dirs) for r in sel) / len(sel),
            sum(r.segment_hit for r in sel) / len(sel))


def gradient_field(field: SolutionField | np.ndarray, grid: Grid2D | None = None,
                   kink_threshold: float | None = None) -> GradientField:
    """Centered differences, one-sided where a neighbour is missing.

    The default kink threshold is ``0.25 * (max u - min u) / R`` with ``R``
    the domain size.
    """
    u = np.asarray(getattr(field, "values", field), dtype=float)
    grid = grid or field.grid
    h = grid.h
    if kink_threshold is None:
        kink_threshold = 0.25 * float(np.nanmax(u) - np.nanmin(u)) / grid.domain.size
    valid = np.isfinite(u) & grid.interior
    grad = np.full(u.shape + (2,), np.nan)
    one_sided = np.zeros(u.shape, dtype=bool)
    kink = np.zeros(u.shape, dtype=bool)
    for ax in (0, 1):
        pad = np.pad(np.where(valid, u, np.nan), 1, constant_values=np.nan)
        core = (slice(1, -1), slice(1, -1))
        sl_plus = [slice(1, -1), slice(1, -1)]
        sl_minus = [slice(1, -1), slice(1, -1)]
        sl_plus[ax] = slice(2, None)
        sl_minus[ax] = slice(None, -2)
        up, um, uc = pad[tuple(sl_plus)], pad[tuple(sl_minus)], pad[core]
        right = (up - uc) / h
        left = (uc - um) / h
        both = np.isfinite(right) & np.isfinite(left)
        g = np.where(both, 0.5 * (right + left), np.where(np.isfinite(right), right, left))
        grad[..., ax] = np.where(valid, g, np.nan)
        one_sided |= valid & ~both
        kink |= both & (np.abs(right - left) > kink_threshold)
    return GradientField(grad, one_sided, kink)


def holder_quotient(field: SolutionField | np.ndarray, grid: Grid2D | None = None,
                    region: Region | Callable | None = None, alpha: float = 1.0,
                    n_pairs: int = 100_000, seed: int = 0,
                    gradient: GradientField | None = None) -> HolderReport:
    """Sup over node pairs of ``|grad u(x1) - grad u(x2)| / |x1 - x2|^alpha``.

    Kink-flagged nodes are excluded.  When the region has at most
    ``n_pairs`` pairs all of them are used, otherwise ``n_pairs`` random
    distinct pairs drawn with ``seed``.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    grid = grid or field.grid
    gf = gradient or gradient_field(field, grid)
    X = grid.coords()
    mask = gf.valid & ~gf.kink
    if region is not None:
        mask &= region(X)
    P = X[mask]
    G = gf.grad[mask]
    n = len(P)
    if n < 2:
        raise ValueError("region holds fewer than two usable nodes")
    if n * (n - 1) // 2 <= n_pairs:
        a, b = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(seed)
        a = rng.integers(0, n, size=n_pairs)
        b = rng.integers(0, n - 1, size=n_pairs)
        b = b + (b >= a)
    dist = np.hypot(*(P[a] - P[b]).T)
    quot = np.hypot(*(G[a] - G[b]).T) / dist**alpha
    k = int(np.argmax(quot))
    label = getattr(region, "label", "all" if region is None else "custom")
    return HolderReport(label, float(alpha), float(quot[k]), (P[a[k]].copy(), P[b[k]].copy()),
                        n, len(a))


def boundary_gap(field: SolutionField, datum: BoundaryDatum | None = None,
                 dirs: DirectionSet | None = None):
    """Largest ``|u(node) - g(y)|`` over truncated stencil steps ending at ``y``.

    Returns ``(gap, y)``.
    """
    table = _table(field, datum, dirs)
    grid = table.grid
    u = table.from_grid(field.values)
    best, where = -1.0, None
    for name, sgn in (("fwd", 1), ("bwd", -1)):
        idx = getattr(table, f"{name}_idx")
        val = getattr(table, f"{name}_val")
        ln = getattr(table, f"{name}_len")
        gap = np.where(idx < 0, np.abs(u[:, None] - val), -1.0)
        n, d = np.unravel_index(int(np.argmax(gap)), gap.shape)
        if gap[n, d] > best:
            best = float(gap[n, d])
            p, q = table.dirs.offsets[d]
            w = sgn * np.array([p, q], dtype=float) / math.hypot(p, q)
            x = grid.node_point(*table.nodes[n])
            where = grid.domain.snap(x + ln[n, d] * w)
    if where is None:
        raise ValueError("no stencil step reaches the boundary")
    return best, where


def ma_residual(field: SolutionField | np.ndarray, grid: Grid2D | None = None) -> np.ndarray:
    """``u_xx u_yy - u_xy^2`` from centered differences, NaN where the 3x3 block is incomplete."""
    u = np.asarray(getattr(field, "values", field), dtype=float)
    grid = grid or field.grid
    h2 = grid.h**2
    out = np.full(u.shape, np.nan)
    c = u[1:-1, 1:-1]
    uxx = (u[2:, 1:-1] - 2 * c + u[:-2, 1:-1]) / h2
    uyy = (u[1:-1, 2:] - 2 * c + u[1:-1, :-2]) / h2
    uxy = (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4 * h2)
    det = uxx * uyy - uxy**2
    ok = grid.interior.copy()
    full = np.ones_like(ok[1:-1, 1:-1])
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            full &= ok[1 + di:ok.shape[0] - 1 + di, 1 + dj:ok.shape[1] - 1 + dj]
    out[1:-1, 1:-1] = np.where(full & np.isfinite(det), det, np.nan)
    return out


def write_contact_csv(path, reports: list[ContactReport]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("i,j,n_flat,segment_hit\n")
        for r in reports:
            fh.write(f"{r.node[0]},{r.node[1]},{len(r.flat_dirs)},{int(r.segment_hit)}\n")


def write_holder_txt(path, reports: list[HolderReport]) -> None:
    lines = []
    for r in reports:
        a, b = r.witness_pair
        lines += [f"region = {r.region}", f"alpha = {r.alpha:.17g}",
                  f"sup_quotient = {r.sup_quotient:.17g}",
                  f"witness = {a[0]:.17g} {a[1]:.17g} {b[0]:.17g} {b[1]:.17g}",
                  f"n_nodes = {r.n_nodes}", f"n_pairs = {r.n_pairs}", ""]
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines))
