"""Shared domain types: points, balls, regions, background measures, cutoffs.

Everything here is an immutable value. Point sets are stored as read-only
``(n, 2)`` float arrays; single points are plain ``(x, y)`` tuples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.spatial import cKDTree

Point2 = tuple[float, float]

BACKGROUND_KINDS = ("zero", "lebesgue", "line")


def as_point(p: Sequence[float]) -> Point2:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"point coordinates must be finite, got {p!r}")
    return (x, y)


def perp(v: np.ndarray) -> np.ndarray:
    """Rotate vectors by -90 degrees: ``(x1, x2) -> (x2, -x1)``."""
    v = np.asarray(v, dtype=float)
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


@dataclass(frozen=True)
class Ball:
    """Closed ball with the given center and radius."""

    center: Point2
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        r = float(self.radius)
        if not (r > 0 and math.isfinite(r)):
            raise ValueError(f"ball radius must be positive and finite, got {self.radius!r}")
        object.__setattr__(self, "radius", r)

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)

    def contains_ball(self, other: "Ball", tol: float = 1e-12) -> bool:
        d = math.dist(self.center, other.center)
        return d + other.radius <= self.radius * (1 + tol) + tol

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.hypot(x[..., 0] - self.center[0], x[..., 1] - self.center[1]) <= self.radius


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PointConfig:
    """A finite set of distinct points in the plane."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            raise ValueError("a point configuration needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", _readonly(pts))
        if self.eta0 <= 0:
            raise ValueError("points must be pairwise distinct")

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def eta0(self) -> float:
        return separation(self)

    def __len__(self):
        return self.n

    def translated(self, shift: Sequence[float]) -> "PointConfig":
        return PointConfig(self.points + np.asarray(shift, dtype=float))


def separation(config: PointConfig) -> float:
    """Half the minimal pairwise distance; ``inf`` for a single point."""
    pts = config.points if isinstance(config, PointConfig) else np.asarray(config, float)
    if len(pts) < 2:
        return math.inf
    d, _ = cKDTree(pts).query(pts, k=2)
    dmin = float(d[:, 1].min())
    if dmin == 0.0:
        raise ValueError("duplicate points in configuration")
    return 0.5 * dmin


@dataclass(frozen=True)
class BackgroundMeasure:
    """Neutralizing background charge ``m``.

    ``zero`` is no background, ``lebesgue`` is the area measure and ``line``
    is arc length on the horizontal axis. ``density_bound`` is the constant
    ``M`` with ``m(B(x, r)) <= pi * M * r`` for ``0 < r < 1``.
    """

    kind: Literal["zero", "lebesgue", "line"] = "zero"

    def __post_init__(self):
        if self.kind not in BACKGROUND_KINDS:
            raise ValueError(f"unknown background kind {self.kind!r}; expected one of {BACKGROUND_KINDS}")

    @property
    def density_bound(self) -> float:
        return {"zero": 0.0, "lebesgue": 1.0, "line": 2.0 / math.pi}[self.kind]

    def mass(self, center, radius) -> np.ndarray | float:
        """Exact mass of the disc(s) of the given center(s) and radius."""
        c = np.asarray(center, dtype=float)
        r = np.asarray(radius, dtype=float)
        if self.kind == "zero":
            out = np.zeros(np.broadcast_shapes(c.shape[:-1], r.shape))
        elif self.kind == "lebesgue":
            out = np.broadcast_to(np.pi * r**2, np.broadcast_shapes(c.shape[:-1], r.shape)).copy()
        else:
            d = np.abs(c[..., 1])
            out = 2.0 * np.sqrt(np.clip(r**2 - d**2, 0.0, None))
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Region:
    """Bounded region: an open ball or an open axis-aligned rectangle.

    For a ball, ``params = (cx, cy, radius)``; for a rectangle,
    ``params = (x0, y0, x1, y1)``.
    """

    kind: Literal["ball", "rectangle"]
    params: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(v) for v in self.params)
        if not all(math.isfinite(v) for v in p):
            raise ValueError("region parameters must be finite")
        if self.kind == "ball":
            if len(p) != 3 or p[2] <= 0:
                raise ValueError("ball region needs (cx, cy, radius) with radius > 0")
        elif self.kind == "rectangle":
            if len(p) != 4 or not (p[2] > p[0] and p[3] > p[1]):
                raise ValueError("rectangle region needs (x0, y0, x1, y1) with x1 > x0 and y1 > y0")
        else:
            raise ValueError(f"unknown region kind {self.kind!r}")
        object.__setattr__(self, "params", p)

    @classmethod
    def ball(cls, center: Sequence[float], radius: float) -> "Region":
        return cls("ball", (center[0], center[1], radius))

    @classmethod
    def rectangle(cls, lo: Sequence[float], hi: Sequence[float]) -> "Region":
        return cls("rectangle", (lo[0], lo[1], hi[0], hi[1]))

    @property
    def area(self) -> float:
        if self.kind == "ball":
            return math.pi * self.params[2] ** 2
        x0, y0, x1, y1 = self.params
        return (x1 - x0) * (y1 - y0)

    @property
    def inradius(self) -> float:
        if self.kind == "ball":
            return self.params[2]
        x0, y0, x1, y1 = self.params
        return 0.5 * min(x1 - x0, y1 - y0)

    @property
    def center(self) -> Point2:
        if self.kind == "ball":
            return (self.params[0], self.params[1])
        x0, y0, x1, y1 = self.params
        return (0.5 * (x0 + x1), 0.5 * (y0 + y1))

    def bbox(self, pad: float = 0.0) -> tuple[float, float, float, float]:
        if self.kind == "ball":
            cx, cy, r = self.params
            return (cx - r - pad, cy - r - pad, cx + r + pad, cy + r + pad)
        x0, y0, x1, y1 = self.params
        return (x0 - pad, y0 - pad, x1 + pad, y1 + pad)

    def signed_distance(self, x) -> np.ndarray:
        """Distance to the complement inside, minus distance to the region outside."""
        x = np.asarray(x, dtype=float)
        if self.kind == "ball":
            cx, cy, r = self.params
            return r - np.hypot(x[..., 0] - cx, x[..., 1] - cy)
        x0, y0, x1, y1 = self.params
        dx = np.minimum(x[..., 0] - x0, x1 - x[..., 0])
        dy = np.minimum(x[..., 1] - y0, y1 - x[..., 1])
        inside = np.minimum(dx, dy)
        outside = np.hypot(np.clip(-dx, 0, None), np.clip(-dy, 0, None))
        return np.where((dx > 0) & (dy > 0), inside, -outside)

    def contains(self, x) -> np.ndarray:
        return self.signed_distance(x) > 0

    def hat_contains(self, x) -> np.ndarray:
        """Membership in the unit neighborhood ``{x : d(x, U) < 1}``."""
        return self.signed_distance(x) > -1.0


@dataclass(frozen=True)
class Cutoff:
    """Ramp cutoff ``height * profile(d(x, U^c) / width)`` clipped to ``[0, height]``.

    ``lipschitz`` bounds the gradient norm and stands in for the sup of
    ``|grad chi|``. The ``smoothstep`` profile is a C^1 variant of the ramp.
    """

    region: Region
    width: float = 1.0
    height: float = 1.0
    profile: Literal["linear", "smoothstep"] = "linear"

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("cutoff width and height must be positive")
        if self.profile not in ("linear", "smoothstep"):
            raise ValueError(f"unknown cutoff profile {self.profile!r}")

    @property
    def sup_norm(self) -> float:
        return self.height

    @property
    def lipschitz(self) -> float:
        slope = 1.0 if self.profile == "linear" else 1.5
        return slope * self.height / self.width

    def __call__(self, x) -> np.ndarray:
        u = np.clip(self.region.signed_distance(x) / self.width, 0.0, 1.0)
        if self.profile == "smoothstep":
            u = u * u * (3.0 - 2.0 * u)
        return self.height * u

    def scaled(self, factor: float) -> "Cutoff":
        return Cutoff(self.region, self.width, self.height * factor, self.profile)

    def translated(self, shift: Sequence[float]) -> "Cutoff":
        r = self.region
        if r.kind == "ball":
            reg = Region.ball((r.params[0] + shift[0], r.params[1] + shift[1]), r.params[2])
        else:
            x0, y0, x1, y1 = r.params
            reg = Region.rectangle((x0 + shift[0], y0 + shift[1]), (x1 + shift[0], y1 + shift[1]))
        return Cutoff(reg, self.width, self.height, self.profile)

    def kinks(self) -> tuple[float, float]:
        """Distances to the complement at which the profile has corners."""
        return (0.0, self.width)

    def low_band_hits(self, points) -> np.ndarray:
        """Which points have their open half-unit disc meeting ``{0 < chi <= sup/2}``.

        For the convex regions used here the distance to the complement is
        1-Lipschitz and decreases linearly toward the nearest boundary point,
        so the test reduces to a bound on the signed distance.
        """
        s = self.region.signed_distance(np.asarray(points, dtype=float).reshape(-1, 2))
        # both profiles cross height/2 at half the ramp width
        half_level = self.width / 2.0
        return (s > -0.5) & (s < half_level + 0.5)


def make_standard_cutoff(region: Region) -> Cutoff:
    """Unit-width linear ramp: 1 at distance >= 1 from the complement, 0 outside."""
    if region.inradius <= 1.0:
        raise ValueError("cutoff ramp does not fit: region inradius must exceed 1")
    return Cutoff(region, width=1.0, height=1.0)


def count_low_band(cutoff: Cutoff, config: PointConfig) -> int:
    """The boundary count ``n'`` for a cutoff and configuration."""
    return int(np.count_nonzero(cutoff.low_band_hits(config.points)))
