"""Point-configuration generators and the JSON job format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import BackgroundMeasure, PointConfig, Region

# nearest-neighbour spacings giving density 1/(2 pi)
HEX_SPACING = math.sqrt(4 * math.pi / math.sqrt(3))
SQUARE_SPACING = math.sqrt(2 * math.pi)
LINE_SPACING = 2 * math.pi

HEX_SHELLS = (7, 19, 37, 61, 91, 127, 169)


def _hex_points(radius: float, a: float) -> np.ndarray:
    m = int(math.ceil(radius / a / (math.sqrt(3) / 2))) + 2
    i, k = np.meshgrid(np.arange(-m, m + 1), np.arange(-m, m + 1), indexing="ij")
    pts = np.stack([a * (i + 0.5 * k), a * (math.sqrt(3) / 2) * k], -1).reshape(-1, 2)
    return pts[np.hypot(pts[:, 0], pts[:, 1]) <= radius + 1e-9]


def hex_lattice(radius: float, spacing: float = HEX_SPACING) -> PointConfig:
    """Hexagonal lattice points in the closed disc ``B(0, radius)``; one point sits at the origin."""
    return PointConfig(_sorted(_hex_points(radius, spacing)))


def square_lattice(radius: float, spacing: float = SQUARE_SPACING, offset: float = 0.5) -> PointConfig:
    """Square lattice points in ``B(0, radius)``, shifted by ``offset * spacing`` in both axes."""
    m = int(math.ceil(radius / spacing)) + 2
    i, k = np.meshgrid(np.arange(-m, m + 1), np.arange(-m, m + 1), indexing="ij")
    pts = spacing * (np.stack([i, k], -1).reshape(-1, 2) + offset)
    return PointConfig(_sorted(pts[np.hypot(pts[:, 0], pts[:, 1]) <= radius + 1e-9]))


def hex_shell(n: int, spacing: float = HEX_SPACING) -> PointConfig:
    """The ``n`` hexagonal-lattice points nearest the origin; ``n`` must close a distance shell."""
    pts = _hex_points(spacing * (math.sqrt(n) + 3), spacing)
    d = np.round(np.hypot(pts[:, 0], pts[:, 1]) / spacing, 9)
    order = np.lexsort((np.arctan2(pts[:, 1], pts[:, 0]), d))
    pts, d = pts[order], d[order]
    if n < len(d) and d[n - 1] == d[n]:
        raise ValueError(f"n = {n} splits a distance shell of the hexagonal lattice")
    return PointConfig(pts[:n])


def line_lattice(half_length: float, spacing: float = LINE_SPACING, offset: float = 0.5) -> PointConfig:
    """Equally spaced points on the horizontal axis inside ``[-half_length, half_length]``."""
    m = int(math.floor(half_length / spacing)) + 1
    xs = spacing * (np.arange(-m, m + 1) + offset)
    xs = xs[np.abs(xs) <= half_length]
    return PointConfig(np.stack([xs, np.zeros_like(xs)], -1))


def poisson_points(n: int, region: Region, rng: np.random.Generator, min_distance: float = 0.0) -> PointConfig:
    """``n`` independent uniform points in ``region``, redrawing any closer than ``min_distance`` to an earlier one."""
    x0, y0, x1, y1 = region.bbox()
    pts: list[np.ndarray] = []
    tries = 0
    while len(pts) < n:
        tries += 1
        if tries > 1000 * n:
            raise RuntimeError("could not place points at the requested minimal distance")
        p = rng.uniform((x0, y0), (x1, y1))
        if not region.contains(p):
            continue
        if min_distance > 0 and pts and np.min(np.hypot(*(np.array(pts) - p).T)) < min_distance:
            continue
        pts.append(p)
    return PointConfig(np.array(pts))


def _sorted(pts: np.ndarray) -> np.ndarray:
    order = np.lexsort((pts[:, 0], pts[:, 1]))
    return pts[order]


@dataclass(frozen=True)
class Job:
    config: PointConfig
    background: BackgroundMeasure
    region: Region | None


class ConfigError(ValueError):
    pass


def _field(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"missing field '{where}{key}'")
    return obj[key]


def region_from_dict(d: dict, where: str = "region.") -> Region:
    kind = _field(d, "kind", where)
    try:
        if kind == "ball":
            c = _field(d, "center", where)
            return Region.ball((float(c[0]), float(c[1])), float(_field(d, "radius", where)))
        if kind == "rectangle":
            lo, hi = _field(d, "lo", where), _field(d, "hi", where)
            return Region.rectangle((float(lo[0]), float(lo[1])), (float(hi[0]), float(hi[1])))
    except (TypeError, IndexError, ValueError) as exc:
        raise ConfigError(f"malformed field '{where[:-1]}': {exc}") from exc
    raise ConfigError(f"field '{where}kind' must be 'ball' or 'rectangle', got {kind!r}")


def region_to_dict(region: Region) -> dict:
    if region.kind == "ball":
        cx, cy, r = region.params
        return {"kind": "ball", "center": [cx, cy], "radius": r}
    x0, y0, x1, y1 = region.params
    return {"kind": "rectangle", "lo": [x0, y0], "hi": [x1, y1]}


def job_from_json(text: str) -> Job:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"input is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("top level of the input must be an object")
    raw = _field(d, "points", "")
    try:
        pts = np.array(raw, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("expected an array of [x, y] pairs")
        config = PointConfig(pts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed field 'points': {exc}") from exc
    bg = d.get("background", {"kind": "zero"})
    try:
        background = BackgroundMeasure(_field(bg, "kind", "background."))
    except ValueError as exc:
        raise ConfigError(f"malformed field 'background.kind': {exc}") from exc
    region = region_from_dict(d["region"]) if "region" in d else None
    return Job(config, background, region)


def job_to_json(config: PointConfig, background: str = "zero", region: Region | None = None) -> str:
    d: dict = {"points": config.points.tolist(), "background": {"kind": background}}
    if region is not None:
        d["region"] = region_to_dict(region)
    return json.dumps(d, indent=1)
