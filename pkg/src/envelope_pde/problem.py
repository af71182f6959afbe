"""Domains, uniform grids and boundary data.

Two domain shapes are supported, a disk and an axis-aligned square.  Boundary
data are either named analytic families or a sampled table of boundary
points.  Everything here is immutable after construction.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

#: classification tolerance against the zero level set of the domain
LEVEL_TOL = 1e-12
#: tolerance for "this point lies on the boundary"
BOUNDARY_TOL = 1e-9


class ConfigError(ValueError):
    """Invalid construction parameters."""


class DomainError(ValueError):
    """A point was outside the set where an operation is defined."""


class Shape(enum.Enum):
    DISK = "disk"
    SQUARE = "square"


@dataclass(frozen=True)
class Domain:
    """A disk (``size`` = radius) or a square (``size`` = half width)."""

    shape: Shape
    size: float
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.size > 0:
            raise ConfigError(f"domain size must be positive, got {self.size}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @classmethod
    def disk(cls, radius: float = 1.0, center=(0.0, 0.0)) -> "Domain":
        return cls(Shape.DISK, float(radius), center)

    @classmethod
    def square(cls, half_width: float = 1.0, center=(0.0, 0.0)) -> "Domain":
        return cls(Shape.SQUARE, float(half_width), center)

    @property
    def perimeter(self) -> float:
        if self.shape is Shape.DISK:
            return 2 * math.pi * self.size
        return 8 * self.size

    def level(self, pts) -> np.ndarray:
        """Signed level-set function: negative inside, zero on the boundary."""
        p = np.asarray(pts, dtype=float)
        dx = p[..., 0] - self.center[0]
        dy = p[..., 1] - self.center[1]
        if self.shape is Shape.DISK:
            return np.hypot(dx, dy) - self.size
        return np.maximum(np.abs(dx), np.abs(dy)) - self.size

    def is_interior(self, pts) -> np.ndarray:
        return self.level(pts) < -LEVEL_TOL

    def on_boundary(self, pts, tol: float = BOUNDARY_TOL) -> np.ndarray:
        return np.abs(self.level(pts)) <= tol

    def distance_to_boundary(self, pts) -> np.ndarray:
        """Euclidean distance from interior points to the boundary."""
        return np.maximum(-self.level(pts), 0.0)

    def ray_exit(self, origin, direction) -> np.ndarray:
        """Distance along unit ``direction`` from interior ``origin`` to the boundary.

        Both arguments broadcast over leading axes.  Computed analytically
        (ray/circle or ray/segment), never by grid search.
        """
        o = np.asarray(origin, dtype=float)
        v = np.asarray(direction, dtype=float)
        ox = o[..., 0] - self.center[0]
        oy = o[..., 1] - self.center[1]
        vx, vy = v[..., 0], v[..., 1]
        if self.shape is Shape.DISK:
            # |o + t v|^2 = r^2 with |v| = 1, take the positive root
            b = ox * vx + oy * vy
            c = ox * ox + oy * oy - self.size**2
            disc = np.maximum(b * b - c, 0.0)
            return -b + np.sqrt(disc)
        r = self.size
        with np.errstate(divide="ignore", invalid="ignore"):
            tx = np.where(vx > 0, (r - ox) / vx, np.where(vx < 0, (-r - ox) / vx, np.inf))
            ty = np.where(vy > 0, (r - oy) / vy, np.where(vy < 0, (-r - oy) / vy, np.inf))
        return np.maximum(np.minimum(tx, ty), 0.0)

    def ray_exit_point(self, origin, direction) -> np.ndarray:
        o = np.asarray(origin, dtype=float)
        v = np.asarray(direction, dtype=float)
        t = self.ray_exit(o, v)
        pt = o + t[..., None] * v
        return self.snap(pt)

    def snap(self, pts) -> np.ndarray:
        """Project near-boundary points exactly onto the boundary."""
        p = np.array(pts, dtype=float, copy=True)
        cx, cy = self.center
        if self.shape is Shape.DISK:
            d = p - (cx, cy)
            rad = np.hypot(d[..., 0], d[..., 1])
            rad = np.where(rad == 0, 1.0, rad)
            return (cx, cy) + d * (self.size / rad)[..., None]
        r = self.size
        dx = p[..., 0] - cx
        dy = p[..., 1] - cy
        on_x = np.abs(dx) >= np.abs(dy)
        p[..., 0] = np.where(on_x, cx + np.sign(dx) * r, cx + np.clip(dx, -r, r))
        p[..., 1] = np.where(on_x, cy + np.clip(dy, -r, r), cy + np.sign(dy) * r)
        return p

    def boundary_param(self, pts) -> np.ndarray:
        """Arclength coordinate in ``[0, perimeter)``, counterclockwise.

        Disk: starts at angle 0.  Square: starts at the corner
        ``(cx + r, cy - r)`` and walks right edge, top, left, bottom.
        """
        p = np.asarray(pts, dtype=float)
        dx = p[..., 0] - self.center[0]
        dy = p[..., 1] - self.center[1]
        r = self.size
        if self.shape is Shape.DISK:
            return np.mod(np.arctan2(dy, dx), 2 * math.pi) * r
        s = np.empty(np.shape(dx))
        right = (dx >= r - BOUNDARY_TOL) & (dy < r - BOUNDARY_TOL)
        top = (dy >= r - BOUNDARY_TOL) & ~right
        left = (dx <= -r + BOUNDARY_TOL) & ~right & ~top
        bottom = ~(right | top | left)
        s[right] = dy[right] + r
        s[top] = 2 * r + (r - dx[top])
        s[left] = 4 * r + (r - dy[left])
        s[bottom] = 6 * r + (dx[bottom] + r)
        return np.mod(s, 8 * r)

    def boundary_point(self, s) -> np.ndarray:
        """Inverse of :meth:`boundary_param`."""
        s = np.mod(np.asarray(s, dtype=float), self.perimeter)
        cx, cy = self.center
        r = self.size
        if self.shape is Shape.DISK:
            th = s / r
            return np.stack([cx + r * np.cos(th), cy + r * np.sin(th)], axis=-1)
        edge = np.minimum((s // (2 * r)).astype(int), 3)
        t = s - 2 * r * edge
        x = np.choose(edge, [np.full_like(t, r), r - t, np.full_like(t, -r), -r + t])
        y = np.choose(edge, [-r + t, np.full_like(t, r), r - t, np.full_like(t, -r)])
        return np.stack([cx + x, cy + y], axis=-1)


class DatumKind(enum.Enum):
    SADDLE = "saddle"
    POWERCONE = "powercone"
    ABSX = "absx"
    AFFINE = "affine"
    CONSTANT = "constant"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class BoundaryDatum:
    """Dirichlet data g on the boundary.

    Use the classmethod constructors; ``params`` holds the family parameters.
    A sampled datum stores its points sorted by boundary parameter and is
    evaluated between samples by linear interpolation in arclength.
    """

    kind: DatumKind
    params: tuple = ()
    points: np.ndarray | None = field(default=None, compare=False, repr=False)
    values: np.ndarray | None = field(default=None, compare=False, repr=False)
    domain: Domain | None = None

    @classmethod
    def saddle(cls):
        return cls(DatumKind.SADDLE)

    @classmethod
    def powercone(cls, eps: float):
        if not 0 < eps < 0.5:
            raise ConfigError(f"powercone exponent must satisfy 0 < eps < 1/2, got {eps}")
        return cls(DatumKind.POWERCONE, (float(eps),))

    @classmethod
    def absx(cls):
        return cls(DatumKind.ABSX)

    @classmethod
    def affine(cls, a: Sequence[float], b: float):
        return cls(DatumKind.AFFINE, (float(a[0]), float(a[1]), float(b)))

    @classmethod
    def constant(cls, c: float):
        return cls(DatumKind.CONSTANT, (float(c),))

    @classmethod
    def sampled(cls, domain: Domain, points, values):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        vals = np.asarray(values, dtype=float).reshape(-1)
        if len(pts) < 3:
            raise ConfigError("a sampled datum needs at least 3 samples")
        if len(vals) != len(pts):
            raise ConfigError("points and values differ in length")
        if not np.all(domain.on_boundary(pts)):
            bad = pts[~domain.on_boundary(pts)][0]
            raise ConfigError(f"sample {tuple(bad)} is not on the boundary")
        if not np.all(np.isfinite(vals)):
            raise ConfigError("sampled values must be finite")
        order = np.argsort(domain.boundary_param(pts), kind="stable")
        pts, vals = pts[order], vals[order]
        pts.setflags(write=False)
        vals.setflags(write=False)
        return cls(DatumKind.SAMPLED, (), pts, vals, domain)

    def __call__(self, pts) -> np.ndarray:
        """Vectorized evaluation; no boundary check (see :func:`eval_g`)."""
        p = np.asarray(pts, dtype=float)
        x, y = p[..., 0], p[..., 1]
        k = self.kind
        if k is DatumKind.SADDLE:
            return x * x - y * y
        if k is DatumKind.POWERCONE:
            return -np.maximum(1.0 + x, 0.0) ** (1.0 - self.params[0])
        if k is DatumKind.ABSX:
            return np.abs(x)
        if k is DatumKind.AFFINE:
            a1, a2, b = self.params
            return a1 * x + a2 * y + b
        if k is DatumKind.CONSTANT:
            return np.full(np.shape(x), self.params[0])
        return self._interp(p)

    def _interp(self, p) -> np.ndarray:
        dom = self.domain
        s_pts = dom.boundary_param(self.points)
        per = dom.perimeter
        # periodic extension so every query has neighbours on both sides
        s_ext = np.concatenate([s_pts[-1:] - per, s_pts, s_pts[:1] + per])
        v_ext = np.concatenate([self.values[-1:], self.values, self.values[:1]])
        s = dom.boundary_param(dom.snap(p))
        return np.interp(s, s_ext, v_ext)

    @property
    def label(self) -> str:
        if self.kind is DatumKind.SAMPLED:
            return f"sampled[{len(self.points)}]"
        if self.params:
            return self.kind.value + " " + " ".join(f"{v:g}" for v in self.params)
        return self.kind.value


@dataclass(frozen=True)
class BoundaryTrace:
    """Ordered boundary samples (points and data values)."""

    points: np.ndarray
    values: np.ndarray

    @property
    def m(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class BoundaryProblem:
    domain: Domain
    datum: BoundaryDatum

    def reference(self) -> Callable | None:
        """Closed-form convex envelope when one is known, else ``None``."""
        d, g = self.domain, self.datum
        unit = d.size == 1.0 and d.center == (0.0, 0.0)
        if g.kind is DatumKind.AFFINE:
            a1, a2, b = g.params
            return lambda p: a1 * p[..., 0] + a2 * p[..., 1] + b
        if g.kind is DatumKind.CONSTANT:
            c = g.params[0]
            return lambda p: np.full(p.shape[:-1], c)
        if g.kind is DatumKind.SADDLE and d.shape is Shape.SQUARE and unit:
            return lambda p: p[..., 0] ** 2 - 1.0
        if g.kind is DatumKind.SADDLE and d.shape is Shape.DISK and unit:
            # on the unit circle x^2 - y^2 = 2x^2 - 1, itself convex
            return lambda p: 2.0 * p[..., 0] ** 2 - 1.0
        if g.kind is DatumKind.ABSX and d.shape is Shape.SQUARE and d.center == (0.0, 0.0):
            return lambda p: np.abs(p[..., 0])
        if g.kind is DatumKind.POWERCONE and unit:
            e = g.params[0]
            return lambda p: -np.maximum(1.0 + p[..., 0], 0.0) ** (1.0 - e)
        return None


class NodeKind(enum.IntEnum):
    EXTERIOR = 0
    INTERIOR = 1


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Uniform grid spanning the bounding box of ``domain``.

    Node ``(i, j)`` sits at ``origin + (i*h, j*h)``; arrays are indexed
    ``[i, j]``.  Nodes on or outside the boundary are exterior.
    """

    domain: Domain
    n: int
    h: float
    origin: tuple[float, float]
    mask: np.ndarray

    @property
    def nx(self) -> int:
        return self.n

    @property
    def ny(self) -> int:
        return self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.h * np.arange(self.n)

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.h * np.arange(self.n)

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(n, n, 2)``."""
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def node_point(self, i: int, j: int) -> np.ndarray:
        return np.array([self.origin[0] + i * self.h, self.origin[1] + j * self.h])

    def nearest_node(self, pt) -> tuple[int, int]:
        p = np.asarray(pt, dtype=float)
        i = int(np.clip(np.rint((p[0] - self.origin[0]) / self.h), 0, self.n - 1))
        j = int(np.clip(np.rint((p[1] - self.origin[1]) / self.h), 0, self.n - 1))
        return i, j

    @property
    def interior(self) -> np.ndarray:
        return self.mask == NodeKind.INTERIOR

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(self.interior))

    def interior_indices(self) -> np.ndarray:
        """``(k, 2)`` array of interior ``(i, j)``, row-major order."""
        return np.argwhere(self.interior)

    def sample(self, fn: Callable) -> np.ndarray:
        """Evaluate a vectorized function at interior nodes; NaN elsewhere."""
        out = np.full(self.shape, np.nan)
        P = self.coords()
        out[self.interior] = fn(P[self.interior])
        return out


def build_grid(domain: Domain, n: int) -> Grid2D:
    """Uniform ``n``-by-``n`` grid whose outer ring lies on or outside the boundary."""
    if int(n) != n or n < 5:
        raise ConfigError(f"n out of range: need an integer n >= 5, got {n}")
    n = int(n)
    r = domain.size
    h = 2 * r / (n - 1)
    origin = (domain.center[0] - r, domain.center[1] - r)
    grid = Grid2D(domain, n, h, origin, np.zeros((n, n), dtype=np.int8))
    mask = np.where(domain.is_interior(grid.coords()), NodeKind.INTERIOR, NodeKind.EXTERIOR)
    mask = mask.astype(np.int8)
    mask.setflags(write=False)
    object.__setattr__(grid, "mask", mask)
    return grid


def eval_g(datum: BoundaryDatum, y, domain: Domain) -> float:
    """g at a single boundary point; raises :class:`DomainError` off the boundary."""
    y = np.asarray(y, dtype=float)
    if not bool(domain.on_boundary(y)):
        raise DomainError(f"point {tuple(y)} is not on the boundary of {domain}")
    return float(datum(y))


def sample_boundary(domain: Domain, datum: BoundaryDatum, m: int) -> BoundaryTrace:
    """``m`` boundary points, roughly equispaced in arclength.

    On a square each edge receives ``m // 4`` or ``m // 4 + 1`` points
    starting at its corner, so the four corners are always present.
    """
    if m < 3:
        raise ConfigError(f"need m >= 3 boundary samples, got {m}")
    if domain.shape is Shape.DISK:
        s = domain.perimeter * np.arange(m) / m
    else:
        if m < 4:
            raise ConfigError("a square trace needs m >= 4 to include its corners")
        side = 2 * domain.size
        counts = [m // 4 + (1 if k < m % 4 else 0) for k in range(4)]
        s = np.concatenate([k * side + side * np.arange(c) / c for k, c in enumerate(counts)])
    pts = domain.boundary_point(s)
    if domain.shape is Shape.SQUARE:
        pts = domain.snap(pts)
    return BoundaryTrace(pts, np.asarray(datum(pts), dtype=float))


def random_trig_datum(domain: Domain, m: int, seed: int, modes: int = 4) -> BoundaryDatum:
    """Smooth random Fourier data sampled at ``m`` points on a disk boundary."""
    if domain.shape is not Shape.DISK:
        raise ConfigError("random trigonometric data are defined on the disk only")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(modes)
    b = rng.standard_normal(modes)
    k = np.arange(1, modes + 1)
    th = 2 * math.pi * np.arange(m) / m
    vals = (a / k**2) @ np.cos(np.outer(k, th)) + (b / k**2) @ np.sin(np.outer(k, th))
    pts = domain.boundary_point(th * domain.size)
    return BoundaryDatum.sampled(domain, pts, vals)


def read_samples_csv(path, domain: Domain) -> BoundaryDatum:
    """Load a ``x,y,g`` CSV into a sampled datum."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [c.strip() for c in next(reader)]
        if header != ["x", "y", "g"]:
            raise ConfigError(f"{path}: expected header x,y,g, got {','.join(header)}")
        rows = [[float(c) for c in row] for row in reader if row]
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return BoundaryDatum.sampled(domain, arr[:, :2], arr[:, 2])


def write_samples_csv(path, trace: BoundaryTrace) -> None:
    with open(Path(path), "w", newline="") as fh:
        fh.write("x,y,g\n")
        for (x, y), g in zip(trace.points, trace.values):
            fh.write(f"{x:.17g},{y:.17g},{g:.17g}\n")
