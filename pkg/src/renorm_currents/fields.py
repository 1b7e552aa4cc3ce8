"""Exactly evaluable vector fields built from vortex-type terms.

Orientation: ``v^perp = (v2, -v1)`` and circles are traversed along
``tau = (x - c)^perp / |x - c|``, so a unit vortex ``(x - p)^perp / |x - p|^2``
has circulation ``+2 pi`` around any circle enclosing ``p``. The background
terms carry the sign that makes the circulation around a disc ``B`` equal to
``2 pi #(points in B) - m(B)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import BackgroundMeasure, PointConfig, perp
from .geometry import GrowthTrace

_CHUNK = 65536


def _as_xy(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(-1, 2)


def _empty2():
    return np.zeros((0, 2))


@dataclass(frozen=True, eq=False)
class AnalyticField:
    """Sum of primitive terms, each divergence-free away from its poles.

    vortices         unit vortices at each row
    background       ``zero``, ``lebesgue`` (``-(x - o)^perp / 2``) or
                     ``line`` (``(-sign(x2 - o2) / 2, 0)``)
    annulus_*        unit vortex at the annulus center restricted to
                     ``inner < |x - c| <= outer``
    ball_*           unit vortex at the ball center restricted to ``|x - c| <= radius``
    """

    vortices: np.ndarray = field(default_factory=_empty2)
    background: str = "zero"
    background_origin: tuple[float, float] = (0.0, 0.0)
    annulus_centers: np.ndarray = field(default_factory=_empty2)
    annulus_inner: np.ndarray = field(default_factory=lambda: np.zeros(0))
    annulus_outer: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ball_centers: np.ndarray = field(default_factory=_empty2)
    ball_radii: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        BackgroundMeasure(self.background)  # validates the kind
        for name in ("vortices", "annulus_centers", "ball_centers"):
            a = np.asarray(getattr(self, name), dtype=float).reshape(-1, 2)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        for name in ("annulus_inner", "annulus_outer", "ball_radii"):
            a = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if not (len(self.annulus_centers) == len(self.annulus_inner) == len(self.annulus_outer)):
            raise ValueError("annulus term arrays have mismatched lengths")
        if len(self.ball_centers) != len(self.ball_radii):
            raise ValueError("ball term arrays have mismatched lengths")
        object.__setattr__(self, "_trees", {})

    @property
    def poles(self) -> np.ndarray:
        return np.concatenate([self.vortices, self.ball_centers])

    @property
    def n_terms(self) -> int:
        bg = 0 if self.background == "zero" else 1
        return len(self.vortices) + bg + len(self.annulus_inner) + len(self.ball_radii)

    def translated(self, shift: Sequence[float]) -> "AnalyticField":
        s = np.asarray(shift, dtype=float)
        o = (self.background_origin[0] + s[0], self.background_origin[1] + s[1])
        return replace(
            self,
            vortices=self.vortices + s,
            background_origin=o,
            annulus_centers=self.annulus_centers + s,
            ball_centers=self.ball_centers + s,
        )

    def without_vortex(self, index: int) -> "AnalyticField":
        keep = np.ones(len(self.vortices), dtype=bool)
        keep[index] = False
        return replace(self, vortices=self.vortices[keep])

    def _tree(self, which: str):
        trees = self._trees
        if which not in trees:
            pts = self.annulus_centers if which == "annulus" else self.ball_centers
            trees[which] = cKDTree(pts) if len(pts) else None
        return trees[which]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        shape = x.shape
        flat = _as_xy(x)
        out = np.empty_like(flat)
        for s in range(0, len(flat), _CHUNK):
            out[s : s + _CHUNK] = self._eval_flat(flat[s : s + _CHUNK])
        return out.reshape(shape)

    def _eval_flat(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        if len(self.vortices):
            # (x - p)^perp / |x - p|^2 = -i / conj(z - p) with z = x1 + i x2
            zc = (x[:, 0] - 1j * x[:, 1])[:, None] - (self.vortices[:, 0] - 1j * self.vortices[:, 1])[None, :]
            if np.any(zc == 0):
                raise ValueError("field evaluated exactly at a pole")
            s = -1j * (1.0 / zc).sum(axis=1)
            out[:, 0] += s.real
            out[:, 1] += s.imag
        if self.background == "lebesgue":
            out -= 0.5 * perp(x - np.asarray(self.background_origin))
        elif self.background == "line":
            out[:, 0] -= 0.5 * np.sign(x[:, 1] - self.background_origin[1])
        if len(self.annulus_inner):
            self._add_restricted(x, out, "annulus")
        if len(self.ball_radii):
            self._add_restricted(x, out, "ball")
        return out

    def _add_restricted(self, x: np.ndarray, out: np.ndarray, which: str):
        if which == "annulus":
            centers, lo, hi = self.annulus_centers, self.annulus_inner, self.annulus_outer
        else:
            centers, hi = self.ball_centers, self.ball_radii
            lo = None
        tree = self._tree(which)
        pairs = cKDTree(x).sparse_distance_matrix(tree, float(hi.max()), output_type="ndarray")
        if len(pairs) == 0:
            return
        i, k, dist = pairs["i"], pairs["j"], pairs["v"]
        inside = dist <= hi[k]
        if lo is not None:
            inside &= dist > lo[k]
        i, k = i[inside], k[inside]
        d = x[i] - centers[k]
        r2 = np.einsum("ij,ij->i", d, d)
        if np.any(r2 == 0):
            raise ValueError("field evaluated exactly at a pole")
        contrib = perp(d) / r2[:, None]
        np.add.at(out, i, contrib)


def eval_field(f: AnalyticField, x) -> np.ndarray:
    return f(x)


def synthetic_j(config: PointConfig, background: BackgroundMeasure | str = "zero") -> AnalyticField:
    """Explicit solution of ``curl j = 2 pi nu - m``, ``div j = 0``: one unit vortex per point."""
    kind = background.kind if isinstance(background, BackgroundMeasure) else background
    return AnalyticField(vortices=np.array(config.points), background=kind)


def make_G(trace: GrowthTrace, annuli, eta: float, points: np.ndarray | None = None) -> AnalyticField:
    """Comparison field: unit vortices on each growth annulus and on each ``eta``-ball.

    ``points`` defaults to the centers of the initial balls of the trace.
    """
    if points is None:
        points = np.array([trace.records[i].center for i in trace.initial_ids])
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(points)
    eta0 = PointConfig(points).eta0
    upper = min(eta0, trace.end / n)
    if not (0 < eta < upper):
        raise ValueError(f"eta must satisfy 0 < eta < min(eta0, r/n) = {upper}, got {eta}")
    ann = list(annuli)
    return AnalyticField(
        annulus_centers=np.array([a.center for a in ann]).reshape(-1, 2),
        annulus_inner=np.array([a.inner for a in ann]),
        annulus_outer=np.array([a.outer for a in ann]),
        ball_centers=points,
        ball_radii=np.full(n, float(eta)),
    )


def _arc_breaks(f: AnalyticField, center: np.ndarray, radius: float) -> list[float]:
    """Angles in ``[0, 2 pi)`` where the integrand along the circle jumps."""
    angles: list[float] = []
    if f.background == "line":
        s = (f.background_origin[1] - center[1]) / radius
        if abs(s) < 1:
            a = math.asin(s)
            angles += [a % (2 * math.pi), (math.pi - a) % (2 * math.pi)]
    circles = [(c, r) for c, lo, hi in zip(f.annulus_centers, f.annulus_inner, f.annulus_outer) for r in (lo, hi)]
    circles += list(zip(f.ball_centers, f.ball_radii))
    for c, rc in circles:
        d = math.dist(c, center)
        if d == 0 or d > radius + rc or d < abs(radius - rc):
            continue
        base = math.atan2(c[1] - center[1], c[0] - center[0])
        cosa = (radius**2 + d**2 - rc**2) / (2 * radius * d)
        a = math.acos(max(-1.0, min(1.0, cosa)))
        angles += [(base + a) % (2 * math.pi), (base - a) % (2 * math.pi)]
    return sorted(set(angles))


def circulation(f: AnalyticField, center: Sequence[float], radius: float, quad_points: int = 4096) -> float:
    """Line integral of ``f . tau`` over the circle, ``tau = (x - c)^perp / |x - c|``.

    Smooth integrands use the periodic trapezoid rule. When the circle crosses
    a jump of some term, the circle is split there and each arc gets
    composite Gauss-Legendre panels.
    """
    c = np.asarray(center, dtype=float)
    if not radius > 0:
        raise ValueError("circle radius must be positive")
    poles = f.poles
    if len(poles):
        gap = np.abs(np.hypot(*(poles - c).T) - radius)
        if gap.min() < radius * 1e-6:
            raise ValueError("circle passes within radius*1e-6 of a pole")

    def integrand(theta):
        e = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        vals = f(c + radius * e)
        return np.einsum("ij,ij->i", vals, perp(e)) * radius

    breaks = _arc_breaks(f, c, radius) + _pole_breaks(poles, c, radius)
    theta, w = circle_rule(breaks, quad_points)
    return float(math.fsum(integrand(theta) * w))


def _pole_breaks(poles: np.ndarray, center: np.ndarray, radius: float, near: float = 0.25) -> list[float]:
    """Break angles graded geometrically toward poles closer than ``near * radius`` to the circle.

    Panels then shrink like the distance to the nearest pole, which keeps
    Gauss-Legendre accurate for nearly singular integrands.
    """
    out: list[float] = []
    if not len(poles):
        return out
    d = poles - center
    gap = np.abs(np.hypot(*d.T) - radius) / radius
    for k in np.flatnonzero(gap < near):
        phi = math.atan2(d[k, 1], d[k, 0])
        w = gap[k]
        out.append(phi % (2 * math.pi))
        while w < math.pi / 2:
            out += [(phi + w) % (2 * math.pi), (phi - w) % (2 * math.pi)]
            w *= 2
    return out


def circle_rule(breaks: Sequence[float], quad_points: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights in ``theta`` for integrals over a full turn.

    Without ``breaks`` this is the periodic trapezoid rule. Otherwise each arc
    between consecutive break angles gets composite 16-point Gauss-Legendre panels.
    """
    breaks = sorted(breaks)
    if not breaks:
        theta = 2 * math.pi * np.arange(quad_points) / quad_points
        return theta, np.full(quad_points, 2 * math.pi / quad_points)
    nodes, weights = np.polynomial.legendre.leggauss(16)
    edges = list(breaks) + [breaks[0] + 2 * math.pi]
    th, wt = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 0:
            continue
        panels = max(1, int(round(quad_points / 16 * (b - a) / (2 * math.pi))))
        pe = np.linspace(a, b, panels + 1)
        mid, half = 0.5 * (pe[1:] + pe[:-1]), 0.5 * (pe[1:] - pe[:-1])
        th.append((mid[:, None] + half[:, None] * nodes[None, :]).ravel())
        wt.append((half[:, None] * weights[None, :]).ravel())
    return np.concatenate(th), np.concatenate(wt)


def eval_squared_with_singularity_split(f: AnalyticField, x, pole_index: int) -> tuple[np.ndarray, float]:
    """Split ``|f|^2 = coef / |x - p|^2 + regular`` near the vortex ``p``.

    With ``v = (x - p)^perp / |x - p|^2`` and ``R = f - v`` computed without
    forming ``f``, the regular part is ``2 v . R + |R|^2`` and ``coef = 1``.
    """
    x = _as_xy(x)
    p = f.vortices[pole_index]
    d = x - p
    r2 = np.einsum("ij,ij->i", d, d)
    if np.any(r2 == 0):
        raise ValueError("cannot split at the pole itself")
    v = perp(d) / r2[:, None]
    R = f.without_vortex(pole_index)(x)
    regular = 2.0 * np.einsum("ij,ij->i", v, R) + np.einsum("ij,ij->i", R, R)
    return regular, 1.0


def field_grid_csv(f: AnalyticField, bbox: Sequence[float], nx: int, ny: int) -> str:
    """Samples on a cell-centered grid as ``x, y, f1, f2, |f|`` rows."""
    x0, y0, x1, y1 = bbox
    xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
    ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    vals = f(pts)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("x", "y", "f1", "f2", "abs"))
    for (px, py), (a, b) in zip(pts, vals):
        w.writerow((f"{px:.17g}", f"{py:.17g}", f"{a:.17g}", f"{b:.17g}", f"{math.hypot(a, b):.17g}"))
    return buf.getvalue()
