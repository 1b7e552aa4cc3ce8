"""Weak-L2 quantities from weighted samples of a magnitude ``|f|``.

A sampled field is a set of (value, area, position) triples whose areas tile
the measured domain. The distribution function, the quasi-norm
``sqrt(sup_t t^2 lambda(t))`` and the rearrangement norm
``sup_E |E|^{-1/2} int_E |f|`` are then exact for the step function the
samples define.

Near a ``1/|x - p|`` singularity, cell-centre samples on a uniform grid
overstate the quasi-norm by a scale-free factor (the few cells next to the
pole sit at distance ~h/sqrt(2) but carry area h^2), so the sampler swaps
the grid cells around each declared pole for a polar patch of equal area
with geometrically graded rings.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import Cutoff


@dataclass(frozen=True)
class SampledField:
    values: np.ndarray
    areas: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        a = np.asarray(self.areas, dtype=float).reshape(-1)
        x = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if not (len(v) == len(a) == len(x)):
            raise ValueError("values, areas and positions must have the same length")
        if not np.all(np.isfinite(v)):
            raise ValueError("sampled values must be finite")
        if np.any(a < 0):
            raise ValueError("sample areas must be non-negative")
        object.__setattr__(self, "values", np.abs(v))
        object.__setattr__(self, "areas", a)
        object.__setattr__(self, "positions", x)

    @property
    def total_area(self) -> float:
        return math.fsum(self.areas)

    def scaled(self, factor: float) -> "SampledField":
        return SampledField(self.values * abs(factor), self.areas, self.positions)

    def with_values(self, values: np.ndarray) -> "SampledField":
        return SampledField(values, self.areas, self.positions)

    def _sorted(self):
        order = np.argsort(-self.values, kind="stable")
        return self.values[order], np.cumsum(self.areas[order])


def grid_cells(bbox: Sequence[float], h: float) -> np.ndarray:
    x0, y0, x1, y1 = bbox
    nx, ny = max(1, int(round((x1 - x0) / h))), max(1, int(round((y1 - y0) / h)))
    xs = x0 + (np.arange(nx) + 0.5) * h
    ys = y0 + (np.arange(ny) + 0.5) * h
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], -1)


def _polar_patch(p: np.ndarray, radius: float, h: float, q: float, r_min: float):
    """Ring samples covering the disc ``B(p, radius)``: positions, areas."""
    n_rings = max(1, math.ceil(math.log(radius / r_min) / math.log(q)))
    edges = r_min * (radius / r_min) ** (np.arange(n_rings + 1) / n_rings)
    pos, area = [p[None, :] + np.array([[r_min, 0.0]])], [math.pi * r_min**2]
    for a, b in zip(edges[:-1], edges[1:]):
        mid = math.sqrt(a * b)
        n_theta = max(16, math.ceil(2 * math.pi * mid / h))
        th = 2 * math.pi * (np.arange(n_theta) + 0.5) / n_theta
        pos.append(p + mid * np.stack([np.cos(th), np.sin(th)], -1))
        area.append(np.full(n_theta, math.pi * (b * b - a * a) / n_theta))
    return np.concatenate(pos), np.concatenate([np.atleast_1d(a) for a in area])


def sample_field(
    magnitude: Callable[[np.ndarray], np.ndarray],
    bbox: Sequence[float],
    h: float,
    mask: Callable[[np.ndarray], np.ndarray] | None = None,
    poles: np.ndarray | None = None,
    core: float = 16.0,
    q: float = 1.01,
    r_min: float | None = None,
) -> SampledField:
    """Samples of ``magnitude`` on the cell-centred grid of ``bbox`` restricted to ``mask``.

    Around each pole, grid cells with centres within ``core * h`` (capped at
    0.45 of the nearest-pole distance) are replaced by a polar patch of the
    same total area.
    """
    if not h > 0:
        raise ValueError("grid spacing must be positive")
    x = grid_cells(bbox, h)
    areas = np.full(len(x), h * h)
    keep = np.ones(len(x), dtype=bool)
    extra_pos, extra_area = [], []
    poles = np.zeros((0, 2)) if poles is None else np.asarray(poles, dtype=float).reshape(-1, 2)
    if len(poles):
        caps = np.full(len(poles), core * h)
        if len(poles) > 1:
            d, _ = cKDTree(poles).query(poles, k=2)
            caps = np.minimum(caps, 0.45 * d[:, 1])
        dist, owner = cKDTree(poles).query(x, k=1)
        dropped = dist < caps[owner]
        keep &= ~dropped
        counts = np.bincount(owner[dropped], minlength=len(poles))
        for k in np.flatnonzero(counts):
            radius = math.sqrt(counts[k] * h * h / math.pi)
            rm = r_min if r_min is not None else radius * 1e-4
            pp, pa = _polar_patch(poles[k], radius, h, q, min(rm, 0.5 * radius))
            extra_pos.append(pp)
            extra_area.append(pa)
    pos = np.concatenate([x[keep]] + extra_pos)
    area = np.concatenate([areas[keep]] + extra_area)
    if mask is not None:
        inside = np.asarray(mask(pos), dtype=bool)
        pos, area = pos[inside], area[inside]
    return SampledField(magnitude(pos) if len(pos) else np.zeros(0), area, pos)


def distribution_function(field: SampledField, t: float) -> float:
    """``|{|f| > t}|``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return math.fsum(field.areas[field.values > t])


def quasi_norm(field: SampledField) -> float:
    """``sqrt(sup_t t^2 lambda(t))``; the sup is approached from below each sample value."""
    v, A = field._sorted()
    if len(v) == 0:
        return 0.0
    return float(math.sqrt(np.max(v * v * A)))


def lorentz_norm(field: SampledField) -> float:
    """``sup_E |E|^{-1/2} int_E |f|``; superlevel sets are optimal, so the sup runs over sorted prefixes."""
    order = np.argsort(-field.values, kind="stable")
    a = field.areas[order]
    A = np.cumsum(a)
    F = np.cumsum(field.values[order] * a)
    ok = A > 0
    if not np.any(ok):
        return 0.0
    return float(np.max(F[ok] / np.sqrt(A[ok])))


def lp_norm(field: SampledField, p: float, weight: Cutoff | None = None) -> float:
    """``(int (w |f|)^p)^{1/p}`` with ``w = sqrt(chi)`` when a cutoff is given."""
    if not p >= 1:
        raise ValueError("p must be at least 1")
    v = field.values
    if weight is not None:
        v = v * np.sqrt(weight(field.positions))
    return math.fsum(field.areas * v**p) ** (1.0 / p)


def embedding_constant(p: float) -> float:
    """``(2 / (2 - p))^{1/p}`` for ``1 <= p < 2``."""
    if not 1 <= p < 2:
        raise ValueError("embedding constant needs 1 <= p < 2")
    return (2.0 / (2.0 - p)) ** (1.0 / p)


@dataclass(frozen=True)
class EmbeddingCheck:
    lhs: float
    rhs: float
    C_p: float
    holds: bool


def embedding_check(field: SampledField, p: float, domain_area: float, slack: float = 0.0) -> EmbeddingCheck:
    """``||f||_p <= C_p |U|^{1/p - 1/2} ||f||_{2,inf}``."""
    if p >= 2:
        raise ValueError("embedding check needs p < 2")
    C = embedding_constant(p)
    lhs = lp_norm(field, p)
    rhs = C * domain_area ** (1.0 / p - 0.5) * lorentz_norm(field)
    return EmbeddingCheck(lhs, rhs, C, lhs <= rhs * (1 + slack))


def distribution_csv(field: SampledField, ts: Sequence[float]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("t", "lambda"))
    for t in ts:
        w.writerow((f"{t:.17g}", f"{distribution_function(field, t):.17g}"))
    return buf.getvalue()
