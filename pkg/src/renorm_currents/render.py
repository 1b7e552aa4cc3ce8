"""Plain SVG renderings of ball collections, annuli and coverings."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .annuli import AnnuliCollection, McrPartition
from .core import Ball

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _frame(bbox: Sequence[float], body: Iterable[str], size: int = 600) -> str:
    x0, y0, x1, y1 = bbox
    w, h = x1 - x0, y1 - y0
    scale = size / max(w, h)
    # flip y so the picture has the usual orientation
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * scale:.1f}" height="{h * scale:.1f}" '
        f'viewBox="{x0:.9g} {-y1:.9g} {w:.9g} {h:.9g}">'
    )
    return "\n".join([head, '<g transform="scale(1,-1)">', *body, "</g>", "</svg>", ""])


def _circle(c, r, stroke, width, fill="none", opacity=1.0) -> str:
    return (
        f'<circle cx="{c[0]:.9g}" cy="{c[1]:.9g}" r="{r:.9g}" fill="{fill}" fill-opacity="{opacity:.3g}" '
        f'stroke="{stroke}" stroke-width="{width:.3g}" vector-effect="non-scaling-stroke"/>'
    )


def _bbox(centers: np.ndarray, radii: np.ndarray, pad: float = 0.05) -> tuple[float, float, float, float]:
    lo = (centers - radii[:, None]).min(axis=0)
    hi = (centers + radii[:, None]).max(axis=0)
    m = pad * max(hi - lo) + 1e-12
    return lo[0] - m, lo[1] - m, hi[0] + m, hi[1] + m


def balls_svg(balls: Sequence[Ball], points: np.ndarray | None = None) -> str:
    c = np.array([b.center for b in balls]).reshape(-1, 2)
    r = np.array([b.radius for b in balls])
    body = [_circle(ci, ri, "#1f77b4", 1.2, "#1f77b4", 0.15) for ci, ri in zip(c, r)]
    if points is not None and len(points):
        dot = 0.01 * max(np.ptp(c, axis=0).max() + 2 * r.max(), 1e-9)
        body += [_circle(p, dot, "black", 0.5, "black") for p in np.asarray(points).reshape(-1, 2)]
    return _frame(_bbox(c, r), body)


def annuli_svg(collection: AnnuliCollection, partition: McrPartition | None = None) -> str:
    """Each annulus drawn as its two circles, coloured by class when a partition is given."""
    cls = partition.class_of() if partition is not None else {}
    c = np.array([a.center for a in collection]).reshape(-1, 2)
    r = np.array([a.outer for a in collection])
    body = []
    for i, a in enumerate(collection):
        col = PALETTE[cls.get(i, 0) % len(PALETTE)]
        body.append(_circle(a.center, a.outer, col, 1.0))
        body.append(_circle(a.center, a.inner, col, 0.6))
    return _frame(_bbox(c, r), body)


def covering_svg(centers: np.ndarray, radius: float, kept: Sequence[Ball], points: np.ndarray) -> str:
    centers = np.asarray(centers).reshape(-1, 2)
    body = [_circle(x, radius, "#bbbbbb", 0.3) for x in centers]
    body += [_circle(b.center, b.radius, "#d62728", 1.5, "#d62728", 0.5) for b in kept]
    body += [_circle(p, radius / 20, "black", 0.5, "black") for p in np.asarray(points).reshape(-1, 2)]
    return _frame(_bbox(centers, np.full(len(centers), radius)), body)
