"""Bounded domains, boundary distances and blow-up boundary sets.

Only intervals, axis-aligned boxes and balls are supported; for these the
distance to the boundary, the signed distance and the nearest-point projection
are exact.  Every query accepts a single point or an ``(n, d)`` batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INTERIOR = "interior"
BOUNDARY = "boundary"
EXTERIOR = "exterior"

BALL_RTOL = 1e-12


class DimensionError(ValueError):
    pass


class ProjectionError(ValueError):
    pass


def _points(x, dim: int):
    """Return ``(pts, single)`` with pts of shape (n, dim)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if dim != 1:
            raise DimensionError(f"scalar point given for a {dim}-dimensional domain")
        return arr.reshape(1, 1), True
    if arr.ndim == 1:
        if arr.shape[0] == dim:
            return arr.reshape(1, dim), True
        if dim == 1:
            return arr.reshape(-1, 1), False
        raise DimensionError(f"point of length {arr.shape[0]} for a {dim}-dimensional domain")
    if arr.ndim == 2 and arr.shape[1] == dim:
        return arr, False
    raise DimensionError(f"array of shape {arr.shape} for a {dim}-dimensional domain")


def _out(values, single):
    return values[0] if single else values


class Domain:
    """Base class; subclasses implement the batch kernels ``_sd`` and ``_proj``."""

    dimension: int

    def signed_distance(self, x):
        pts, single = _points(x, self.dimension)
        return _out(self._sd(pts), single)

    def distance_to_boundary(self, x):
        pts, single = _points(x, self.dimension)
        return _out(np.maximum(self._sd(pts), 0.0), single)

    def contains(self, x):
        pts, single = _points(x, self.dimension)
        labels = self._classify(pts)
        return labels[0] if single else labels

    def _classify(self, pts):
        sd = self._sd(pts)
        labels = np.full(sd.shape, INTERIOR, dtype=object)
        labels[sd == 0.0] = BOUNDARY
        labels[sd < 0.0] = EXTERIOR
        return labels

    def project_to_boundary(self, x):
        pts, single = _points(x, self.dimension)
        proj = self._proj(pts)
        return proj[0] if single else proj

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    @property
    def inradius(self) -> float:
        """Largest value of the distance to the boundary."""
        raise NotImplementedError


@dataclass(frozen=True)
class Box(Domain):
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or not lo:
            raise DimensionError("lo and hi must have the same positive length")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dimension(self) -> int:
        return len(self.lo)

    def _sd(self, pts):
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        gaps = np.minimum(pts - lo, hi - pts)
        inner = gaps.min(axis=1)
        outside = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
        outer = np.sqrt((outside**2).sum(axis=1))
        return np.where(inner >= 0.0, inner, -outer)

    def _proj(self, pts):
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        clipped = np.clip(pts, lo, hi)
        inside = np.all((pts > lo) & (pts < hi), axis=1)
        out = clipped.copy()
        if np.any(inside):
            p = pts[inside]
            # columns ordered (lo_0, hi_0, lo_1, hi_1, ...) so argmin breaks ties by lowest axis
            gaps = np.empty((p.shape[0], 2 * self.dimension))
            gaps[:, 0::2] = p - lo
            gaps[:, 1::2] = hi - p
            k = np.argmin(gaps, axis=1)
            axis = k // 2
            target = np.where(k % 2 == 0, lo[axis], hi[axis])
            q = p.copy()
            q[np.arange(q.shape[0]), axis] = target
            out[inside] = q
        return out

    @property
    def bounding_box(self):
        return np.asarray(self.lo), np.asarray(self.hi)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    @property
    def inradius(self) -> float:
        return 0.5 * float(np.min(np.subtract(self.hi, self.lo)))


class Interval(Box):
    """The open interval (a, b), a one-dimensional box."""

    def __init__(self, a: float, b: float):
        super().__init__((a,), (b,))

    @property
    def a(self) -> float:
        return self.lo[0]

    @property
    def b(self) -> float:
        return self.hi[0]

    def __repr__(self):
        return f"Interval({self.a}, {self.b})"


@dataclass(frozen=True)
class Ball(Domain):
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        if not c:
            raise DimensionError("empty center")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dimension(self) -> int:
        return len(self.center)

    def _sd(self, pts):
        r = np.linalg.norm(pts - np.asarray(self.center), axis=1)
        sd = self.radius - r
        return np.where(np.abs(sd) <= BALL_RTOL * self.radius, 0.0, sd)

    def _proj(self, pts):
        c = np.asarray(self.center)
        v = pts - c
        r = np.linalg.norm(v, axis=1)
        if np.any(r == 0.0):
            raise ProjectionError("the centre of a ball has no unique nearest boundary point")
        return c + self.radius * v / r[:, None]

    @property
    def bounding_box(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def inradius(self) -> float:
        return self.radius


def contains(domain: Domain, x):
    return domain.contains(x)


def distance_to_boundary(domain: Domain, x):
    return domain.distance_to_boundary(x)


def signed_distance(domain: Domain, x):
    return domain.signed_distance(x)


def project_to_boundary(domain: Domain, x):
    return domain.project_to_boundary(x)


# ---------------------------------------------------------------------------
# boundary regions


@dataclass(frozen=True)
class BoxRegion:
    """Closed axis-aligned (possibly degenerate) box; a point or a face piece."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or not all(a <= b for a, b in zip(lo, hi)):
            raise ValueError(f"invalid region bounds lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, p):
        return cls(p, p)

    def distance(self, pts):
        gap = np.maximum(np.maximum(np.asarray(self.lo) - pts, pts - np.asarray(self.hi)), 0.0)
        return np.sqrt((gap**2).sum(axis=1))


@dataclass(frozen=True)
class CapRegion:
    """Closed spherical cap {c + r u : angle(u, axis) <= half_angle} of a ball boundary."""

    center: tuple
    radius: float
    axis: tuple
    half_angle: float

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        object.__setattr__(self, "axis", tuple(a / np.linalg.norm(a)))
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    def distance(self, pts):
        c = np.asarray(self.center)
        u = np.asarray(self.axis)
        v = pts - c
        r = np.linalg.norm(v, axis=1)
        along = v @ u
        cos_ang = np.divide(along, r, out=np.ones_like(r), where=r > 0)
        inside = cos_ang >= np.cos(self.half_angle)
        radial = np.abs(r - self.radius)
        # nearest point of the rim lies in the plane of u and v
        w = v - along[:, None] * u
        wn = np.linalg.norm(w, axis=1)
        fallback = np.zeros_like(u)
        fallback[np.argmin(np.abs(u))] = 1.0
        fallback -= (fallback @ u) * u
        fallback /= np.linalg.norm(fallback)
        w = np.where(wn[:, None] > 0, w / np.where(wn > 0, wn, 1.0)[:, None], fallback)
        rim = c + self.radius * (np.cos(self.half_angle) * u + np.sin(self.half_angle) * w)
        to_rim = np.linalg.norm(pts - rim, axis=1)
        return np.where(inside, radial, to_rim)


@dataclass(frozen=True)
class BlowupSet:
    """Finite union of closed boundary regions where the boundary datum is +inf."""

    regions: tuple = ()
    dimension: int = 1

    def distance(self, p):
        pts, single = _points(p, self.dimension)
        if not self.regions:
            d = np.full(pts.shape[0], np.inf)
        else:
            d = np.min([reg.distance(pts) for reg in self.regions], axis=0)
        return _out(d, single)

    def contains(self, p, tol: float = 1e-12):
        return self.distance(p) <= tol

    @property
    def empty(self) -> bool:
        return not self.regions


@dataclass(frozen=True)
class BoundaryData:
    """Boundary datum g: a finite nonnegative part, and +inf on the blow-up set.

    The finite part is ``default`` plus an optional affine term ``coef . x + const``,
    overridden by constant ``pieces`` (region, value) wherever a region matches.
    """

    default: float = 0.0
    pieces: tuple = ()
    affine: tuple | None = None
    blowup: BlowupSet = field(default_factory=BlowupSet)
    dimension: int = 1
    match_tol: float = 1e-9

    def __post_init__(self):
        values = [self.default] + [v for _, v in self.pieces]
        if any(not np.isfinite(v) or v < 0 for v in values):
            raise ValueError("finite boundary values must be finite and nonnegative")
        if self.blowup.regions and self.blowup.dimension != self.dimension:
            raise DimensionError("blow-up set and boundary data dimensions differ")

    def _finite(self, pts):
        vals = np.full(pts.shape[0], float(self.default))
        if self.affine is not None:
            coef, const = self.affine
            vals = vals + pts @ np.asarray(coef, dtype=float) + float(const)
        for region, value in self.pieces:
            vals[region.distance(pts) <= self.match_tol] = value
        return vals

    def finite_part(self, p):
        pts, single = _points(p, self.dimension)
        return _out(self._finite(pts), single)

    def __call__(self, p):
        pts, single = _points(p, self.dimension)
        vals = self._finite(pts)
        if not self.blowup.empty:
            vals = np.where(self.blowup.distance(pts) <= self.match_tol, np.inf, vals)
        return _out(vals, single)

    def truncated(self, p, n: float):
        return np.minimum(self(p), n)

    def sup_finite(self, domain: Domain) -> float:
        """Declared sup of the finite part; an affine term is bounded over the bounding box."""
        sup = max([self.default] + [v for _, v in self.pieces])
        if self.affine is not None:
            coef, const = self.affine
            lo, hi = domain.bounding_box
            corner = np.where(np.asarray(coef) >= 0, hi, lo)
            sup = max(sup, self.default + float(np.dot(coef, corner)) + float(const))
        return float(sup)

    @property
    def min_value(self) -> float:
        """Lower bound of g (affine parts are not bounded here and give 0)."""
        if self.affine is not None:
            return 0.0
        return float(min([self.default] + [v for _, v in self.pieces]))


def distance_to_blowup(bdata: BoundaryData, p):
    """Euclidean distance from boundary point(s) to the blow-up set (+inf if it is empty)."""
    return bdata.blowup.distance(p)


def boundary_sampler(domain: Domain, n: int) -> np.ndarray:
    """Deterministic boundary points, used for sampled invariants."""
    if isinstance(domain, Interval):
        return np.array([[domain.a], [domain.b]])
    if isinstance(domain, Ball):
        if domain.dimension != 2:
            raise NotImplementedError("boundary sampling of balls is implemented in 2D")
        th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        return np.asarray(domain.center) + domain.radius * np.c_[np.cos(th), np.sin(th)]
    lo, hi = domain.bounding_box
    pts = []
    per = max(2, n // (2 * domain.dimension))
    for axis in range(domain.dimension):
        for side in (lo[axis], hi[axis]):
            grid = np.linspace(lo, hi, per)
            grid[:, axis] = side
            pts.append(grid)
    return np.vstack(pts)

