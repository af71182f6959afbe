"""Exact convex envelope of sampled boundary data.

The envelope at ``x`` is the smallest value any convex combination of
boundary samples can take at ``x``.  :func:`envelope_value` finds it by
enumerating every segment and triangle of samples containing ``x``.
:func:`envelope_grid` evaluates a whole grid as the upper envelope of the
lower-hull facet planes of the lifted samples, which is the same function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.spatial import ConvexHull

from .problem import BoundaryTrace, DomainError, Grid2D
from .envelope_solver import SolutionField

#: relative tolerance for "x lies on this segment / in this triangle"
GEOM_EPS = 1e-12


@dataclass(frozen=True)
class EnvelopeWitness:
    """Envelope value with the simplex attaining it and a supporting plane."""

    value: float
    points: np.ndarray
    weights: np.ndarray
    plane: tuple[np.ndarray, float]

    @property
    def k(self) -> int:
        return len(self.weights)

    def plane_at(self, pts) -> np.ndarray:
        A, b = self.plane
        return np.asarray(pts, dtype=float) @ A + b


@njit(cache=True)
def _brute_force(x0, x1, P, g, eps):
    m = P.shape[0]
    best = 1e300
    bi = -1
    bj = -1
    bk = -1
    scale = 0.0
    for i in range(m):
        scale = max(scale, abs(P[i, 0] - x0), abs(P[i, 1] - x1))
    tol = eps * max(scale, 1.0)
    # segments through x
    for i in range(m):
        ax = P[i, 0] - x0
        ay = P[i, 1] - x1
        for j in range(i + 1, m):
            ex = P[j, 0] - P[i, 0]
            ey = P[j, 1] - P[i, 1]
            ll = ex * ex + ey * ey
            if ll == 0.0:
                continue
            cr = ex * ay - ey * ax
            if abs(cr) > tol * np.sqrt(ll):
                continue
            t = -(ax * ex + ay * ey) / ll
            if t <= 0.0 or t >= 1.0:
                continue
            v = (1.0 - t) * g[i] + t * g[j]
            if v < best:
                best = v
                bi = i
                bj = j
    # triangles containing x; only strict improvements replace a segment
    tri_best = best
    for i in range(m):
        ax = P[i, 0] - x0
        ay = P[i, 1] - x1
        for j in range(i + 1, m):
            bx = P[j, 0] - x0
            by = P[j, 1] - x1
            s1 = ax * by - ay * bx
            for k in range(j + 1, m):
                cx = P[k, 0] - x0
                cy = P[k, 1] - x1
                s2 = bx * cy - by * cx
                s3 = cx * ay - cy * ax
                area = s1 + s2 + s3
                if abs(area) <= tol * max(scale, 1.0):
                    continue
                l0 = s2 / area
                l1 = s3 / area
                l2 = s1 / area
                if l0 < -eps or l1 < -eps or l2 < -eps:
                    continue
                v = l0 * g[i] + l1 * g[j] + l2 * g[k]
                if v < tri_best - 1e-12 * (1.0 + abs(tri_best)):
                    tri_best = v
                    bi = i
                    bj = j
                    bk = k
    if bk >= 0:
        best = tri_best
    return best, bi, bj, bk


def _pair_plane(P, g, i, j):
    """A plane through lifted samples ``i``, ``j`` lying below every sample.

    Planes containing the lifted segment form a one-parameter family (tilt
    across the segment); take the midpoint of the feasible tilt interval.
    """
    e = P[j] - P[i]
    L = np.hypot(*e)
    t_hat = e / L
    n_hat = np.array([-t_hat[1], t_hat[0]])
    slope = (g[j] - g[i]) / L
    rel = P - P[i]
    along = rel @ t_hat
    across = rel @ n_hat
    gap = g - (g[i] + slope * along)
    pos = across > 1e-12
    neg = across < -1e-12
    hi = np.min(gap[pos] / across[pos]) if np.any(pos) else np.inf
    lo = np.max(gap[neg] / across[neg]) if np.any(neg) else -np.inf
    if np.isfinite(hi) and np.isfinite(lo):
        s = 0.5 * (lo + hi)
    elif np.isfinite(hi):
        s = hi
    elif np.isfinite(lo):
        s = lo
    else:
        s = 0.0
    A = slope * t_hat + s * n_hat
    b = g[i] - A @ P[i]
    return A, float(b)


def _tri_plane(P, g, idx):
    M = np.column_stack([P[idx], np.ones(3)])
    sol = np.linalg.solve(M, g[idx])
    return sol[:2], float(sol[2])


def envelope_value(x, trace: BoundaryTrace) -> EnvelopeWitness:
    """Envelope of the trace at ``x`` by exhaustive search over segments and triangles."""
    x = np.asarray(x, dtype=float)
    P = np.ascontiguousarray(trace.points, dtype=float)
    g = np.ascontiguousarray(trace.values, dtype=float)
    val, i, j, k = _brute_force(x[0], x[1], P, g, GEOM_EPS)
    if i < 0:
        raise DomainError(f"point {tuple(x)} is outside the convex hull of the samples")
    if k < 0:
        t = np.hypot(*(x - P[i])) / np.hypot(*(P[j] - P[i]))
        w = np.array([1.0 - t, t])
        idx = np.array([i, j])
        plane = _pair_plane(P, g, i, j)
    else:
        idx = np.array([i, j, k])
        M = np.vstack([P[idx].T, np.ones(3)])
        w = np.linalg.solve(M, np.array([x[0], x[1], 1.0]))
        plane = _tri_plane(P, g, idx)
    return EnvelopeWitness(float(val), P[idx].copy(), w, plane)


@dataclass(frozen=True, eq=False)
class LowerHull:
    """Lower facets of the lifted samples as planes ``z = A.x + b``."""

    trace: BoundaryTrace
    simplices: np.ndarray
    A: np.ndarray
    b: np.ndarray

    @classmethod
    def build(cls, trace: BoundaryTrace) -> "LowerHull":
        P, g = trace.points, trace.values
        span = float(np.ptp(g)) + np.ptp(P)
        # an apex far above keeps the hull full-dimensional for coplanar data
        apex = np.array([[*P.mean(axis=0), g.max() + 10.0 * span + 1.0]])
        pts = np.vstack([np.column_stack([P, g]), apex])
        hull = ConvexHull(pts)
        m = len(P)
        keep = (hull.equations[:, 2] < -1e-10) & np.all(hull.simplices < m, axis=1)
        simp = hull.simplices[keep]
        eq = hull.equations[keep]
        A = -eq[:, :2] / eq[:, 2:3]
        b = -eq[:, 3] / eq[:, 2]
        return cls(trace, simp, A, b)

    def inside(self, X) -> np.ndarray:
        """Whether points lie in the convex hull of the sample points."""
        from scipy.spatial import Delaunay

        tri = Delaunay(self.trace.points)
        return tri.find_simplex(np.asarray(X, dtype=float), tol=1e-12) >= 0

    def evaluate(self, X, chunk: int = 4096):
        """Envelope values and attaining facet indices for points ``X``."""
        X = np.asarray(X, dtype=float).reshape(-1, 2)
        vals = np.empty(len(X))
        arg = np.empty(len(X), dtype=np.int64)
        for s in range(0, len(X), chunk):
            Z = X[s:s + chunk] @ self.A.T + self.b
            arg[s:s + chunk] = np.argmax(Z, axis=1)
            vals[s:s + chunk] = Z[np.arange(len(Z)), arg[s:s + chunk]]
        return vals, arg

    def witness(self, x) -> EnvelopeWitness:
        x = np.asarray(x, dtype=float)
        Z = self.A @ x + self.b
        top = Z.max()
        # coplanar facets tie on the max; pick one whose triangle holds x
        for f in np.flatnonzero(Z >= top - 1e-10 * (1.0 + abs(top))):
            P = self.trace.points[self.simplices[f]]
            w = np.linalg.solve(np.vstack([P.T, np.ones(3)]), np.array([x[0], x[1], 1.0]))
            if w.min() >= -1e-10:
                break
        else:
            raise DomainError(f"point {tuple(x)} is outside the convex hull of the samples")
        val = np.array([top])
        keep = w > 1e-12
        return EnvelopeWitness(float(val[0]), P[keep], w[keep] / w[keep].sum(),
                               (self.A[f].copy(), float(self.b[f])))


def envelope_grid(grid: Grid2D, trace: BoundaryTrace, method: str = "hull") -> SolutionField:
    """Envelope at every interior node.

    Nodes outside the sample hull (possible only within a chord's sagitta
    of a curved boundary) are left NaN.  ``method="brute"`` runs the
    exhaustive search at every node and is only practical for small inputs.
    """
    P = grid.coords()[grid.interior]
    vals = np.full(len(P), np.nan)
    if method == "hull":
        hull = LowerHull.build(trace)
        ok = hull.inside(P)
        vals[ok] = hull.evaluate(P[ok])[0]
    elif method == "brute":
        for n, x in enumerate(P):
            try:
                vals[n] = envelope_value(x, trace).value
            except DomainError:
                pass
    else:
        raise ValueError(f"unknown method {method!r}")
    out = np.full(grid.shape, np.nan)
    out[grid.interior] = vals
    return SolutionField(grid, out, converged=True, final_residual=0.0, tol=0.0)


def contact_points(witness: EnvelopeWitness, trace: BoundaryTrace, tol: float | None = None) -> np.ndarray:
    """Samples where the supporting plane touches the data, within ``tol``.

    The default tolerance is ``1e-6 * (max g - min g)``.
    """
    g = trace.values
    if tol is None:
        tol = 1e-6 * float(np.ptp(g)) or 1e-12
    gap = g - witness.plane_at(trace.points)
    hit = gap <= tol
    # the simplex vertices are contacts by construction
    for p in witness.points:
        hit |= np.all(np.isclose(trace.points, p, rtol=0, atol=1e-14), axis=1)
    return trace.points[hit]


def write_witness_csv(path, grid: Grid2D, hull: LowerHull) -> None:
    """``x,y,value,k`` followed by up to three ``(px, py, w)`` support triples."""
    head = "x,y,value,k,p1x,p1y,w1,p2x,p2y,w2,p3x,p3y,w3"
    lines = [head]
    P = grid.coords()[grid.interior]
    ok = hull.inside(P)
    for x in P[ok]:
        w = hull.witness(x)
        cells = [f"{x[0]:.17g}", f"{x[1]:.17g}", f"{w.value:.17g}", str(w.k)]
        for p, wt in zip(w.points, w.weights):
            cells += [f"{p[0]:.17g}", f"{p[1]:.17g}", f"{wt:.17g}"]
        cells += [""] * (3 * (3 - w.k))
        lines.append(",".join(cells))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
