"""Renormalized energy of a field with unit vortices, by adaptive cubature and eta-extrapolation.

The integral of ``chi |j|^2`` off the eta-discs is split with a radial
partition of unity ``psi_p`` (1 on ``|x - p| <= delta_p / 2``, 0 beyond
``delta_p``). The far part ``(1 - sum psi) chi |j|^2`` is bounded. Near each
pole, ``|j|^2 = 1/r^2 + reg`` with ``reg = 2 v . R + |R|^2`` integrable in
polar coordinates, and ``chi psi / r^2`` is integrated as

    int (chi(x) - chi(p)) psi / r^2  +  2 pi chi(p) [log(delta/2) - log eta + int_{delta/2}^{delta} psi/r dr]

so the ``log eta`` term of the energy cancels against the analytic piece
and the remaining eta-dependence is a bounded ring integral.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.spatial import cKDTree

from .core import BackgroundMeasure, Cutoff, PointConfig, Region, make_standard_cutoff, perp
from .fields import AnalyticField, synthetic_j
from .quadrature import adaptive_cubature, richardson

MAX_LEVELS = 12
N_SECTORS = 8


def bump(r, delta):
    """C^2 radial bump: 1 up to ``delta/2``, 0 from ``delta`` on."""
    s = np.clip((np.asarray(r, dtype=float) - 0.5 * delta) / (0.5 * delta), 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


# int_{delta/2}^{delta} bump(r, delta) / r dr does not depend on delta
BUMP_LOG_MOMENT = integrate.quad(lambda u: float(bump(u, 1.0)) / u, 0.5, 1.0, epsabs=1e-14, epsrel=1e-12)[0]


def patch_radii(centers: np.ndarray, cap: float = 1.0) -> np.ndarray:
    """Per-center patch radius ``min(cap, 0.45 * nearest-neighbour distance)``; patches are disjoint."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    if len(centers) < 2:
        return np.full(len(centers), cap)
    d, _ = cKDTree(centers).query(centers, k=2)
    return np.minimum(cap, 0.45 * d[:, 1])


def _line_y(j: AnalyticField) -> float | None:
    return j.background_origin[1] if j.background == "line" else None


def field_patch_radii(centers: np.ndarray, j: AnalyticField) -> np.ndarray:
    """Patch radii that also keep off-line patches clear of the jump of a line background."""
    deltas = patch_radii(centers)
    line_y = _line_y(j)
    if line_y is not None and len(deltas):
        off = np.abs(np.asarray(centers, dtype=float).reshape(-1, 2)[:, 1] - line_y)
        deltas = np.where(off > 0, np.minimum(deltas, off), deltas)
    return deltas


def _nearest_bump(x: np.ndarray, tree: cKDTree | None, deltas: np.ndarray) -> np.ndarray:
    if tree is None:
        return np.zeros(len(x))
    d, k = tree.query(x, k=1)
    return bump(d, deltas[k])


def _far_cells(chi: Cutoff, line_y: float | None):
    """Initial cells and the map to the plane for the support of ``chi``."""
    reg = chi.region
    w = chi.width
    if reg.kind == "ball":
        cx, cy, R = reg.params
        inner = max(R - w, 0.0)
        r_edges = np.unique(np.concatenate([np.linspace(0.0, inner, max(1, math.ceil(inner)) + 1), [inner, R]]))
        r_edges = r_edges[r_edges <= R]
        n_sec = 2 * max(4, math.ceil(math.pi * R / 1.5))
        t_edges = np.linspace(0.0, 2 * math.pi, n_sec + 1)
        cells = np.array([[a, b, c, d] for a, b in zip(r_edges[:-1], r_edges[1:]) for c, d in zip(t_edges[:-1], t_edges[1:])])

        def to_plane(u, v):
            return np.stack([cx + u * np.cos(v), cy + u * np.sin(v)], -1), u

        return cells, to_plane
    x0, y0, x1, y1 = reg.params

    def edges(a, b, extra):
        e = np.linspace(a, b, max(1, math.ceil(b - a)) + 1)
        e = np.concatenate([e, [t for t in extra if a < t < b]])
        return np.unique(e)

    xe = edges(x0, x1, [x0 + w, x1 - w])
    ye = edges(y0, y1, [y0 + w, y1 - w] + ([line_y] if line_y is not None else []))
    cells = np.array([[a, b, c, d] for a, b in zip(xe[:-1], xe[1:]) for c, d in zip(ye[:-1], ye[1:])])

    def to_plane(u, v):
        return np.stack([u, v], -1), np.ones_like(u)

    return cells, to_plane


def far_integral(
    values: Callable[[np.ndarray], np.ndarray],
    chi: Cutoff,
    centers: np.ndarray,
    deltas: np.ndarray,
    tol: float,
    line_y: float | None = None,
):
    """``int (1 - sum_c psi_c) chi values`` over the support of ``chi``."""
    tree = cKDTree(centers) if len(centers) else None
    cells, to_plane = _far_cells(chi, line_y)

    def f(u, v):
        x, jac = to_plane(u, v)
        wgt = chi(x) * (1.0 - _nearest_bump(x, tree, deltas)) * jac
        out = np.zeros(len(u))
        live = wgt > 0
        if np.any(live):
            out[live] = wgt[live] * values(x[live])
        return out

    return adaptive_cubature(f, cells, tol)


def polar_patches(
    h: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    r_edges: Sequence[np.ndarray],
    tol: float,
    n_sectors: int = N_SECTORS,
):
    """Integrate ``h(pole_index, r, theta)`` over radial panels around several poles at once.

    The angular coordinate is offset by ``4 pi * pole_index`` to keep the
    batch vectorized. Returns ``(result, owner_table)`` where owner ``k``
    is the panel ``owner_table[k] = (pole_index, panel_index)``.
    """
    cells, owners, table = [], [], []
    t_edges = np.linspace(0.0, 2 * math.pi, n_sectors + 1)
    for i, edges in enumerate(r_edges):
        for k, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
            if not b > a:
                continue
            for c, d in zip(t_edges[:-1], t_edges[1:]):
                cells.append([a, b, 4 * math.pi * i + c, 4 * math.pi * i + d])
                owners.append(len(table))
            table.append((i, k))

    def f(u, v):
        idx = np.floor(v / (4 * math.pi)).astype(int)
        return h(idx, u, v - 4 * math.pi * idx)

    return adaptive_cubature(f, np.array(cells).reshape(-1, 4), tol, owners=np.array(owners, dtype=int)), table


@dataclass
class EnergyReport:
    W_estimate: float
    eta_sequence: list[float]
    I_values: list[float]
    extrapolants: list[float]
    residual: float
    tol: float
    quadrature_error: float
    far_part: float
    n_poles: int
    chi_sum: float
    converged: bool = True
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EnergyReport":
        return cls(**json.loads(text))


class ExtrapolationError(RuntimeError):
    def __init__(self, message: str, report: EnergyReport):
        super().__init__(message)
        self.report = report


def _sq(v: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", v, v)


def _match_poles(j: AnalyticField, config: PointConfig) -> np.ndarray:
    if len(j.annulus_inner) or len(j.ball_radii):
        raise ValueError("renormalized energy expects a field made of unit vortices and a background term")
    pts = config.points
    if len(j.vortices) != len(pts):
        raise ValueError("field vortices must coincide with the configuration points")
    if len(pts):
        d, _ = cKDTree(j.vortices).query(pts)
        if d.max() > 1e-12 * (1 + np.abs(pts).max()):
            raise ValueError("field vortices must coincide with the configuration points")
    return pts


def renormalized_energy(
    j: AnalyticField,
    chi: Cutoff,
    config: PointConfig | None,
    tol: float = 1e-4,
    eta_start: float | None = None,
    max_levels: int = MAX_LEVELS,
) -> EnergyReport:
    """Limit of ``1/2 int_{off eta-discs} chi |j|^2 + pi log(eta) sum chi(p)`` as ``eta -> 0``."""
    pts = _match_poles(j, config) if config is not None else np.zeros((0, 2))
    line_y = _line_y(j)
    deltas = field_patch_radii(pts, j)
    qtol = tol / 20.0

    far = far_integral(lambda x: _sq(j(x)), chi, pts, deltas, qtol, line_y)
    if len(pts) == 0:
        return EnergyReport(0.5 * far.total, [], [], [], 0.0, tol, far.error, far.total, 0, 0.0, far.converged)

    chi_p = chi(pts)
    active = np.flatnonzero(chi.region.signed_distance(pts) > -deltas)
    chi_sum = math.fsum(chi_p)
    chi_active = math.fsum(chi_p[active])
    d_act = deltas[active]
    if eta_start is None:
        eta_start = float(d_act.min()) / 8 if len(active) else 0.1
    if len(active) and eta_start >= d_act.min() / 2:
        raise ValueError("eta_start must lie inside every pole patch core")

    def h(idx, r, theta):
        k = active[idx]
        p = pts[k]
        e = np.stack([np.cos(theta), np.sin(theta)], -1)
        x = p + r[:, None] * e
        psi = bump(r, deltas[k])
        cx = chi(x)
        v = perp(e) / r[:, None]
        R = j(x) - v
        reg = 2.0 * np.einsum("ij,ij->i", v, R) + np.einsum("ij,ij->i", R, R)
        return (cx - chi_p[k]) * psi / r + cx * psi * reg * r

    base_edges = [np.array([eta_start] + [x for x in _doubling(eta_start, d / 2)] + [d]) for d in d_act]
    base, _ = polar_patches(h, base_edges, qtol)
    analytic = [2 * math.pi * chi_p[k] * (math.log(deltas[k] / 2) + BUMP_LOG_MOMENT) for k in active]
    near = math.fsum(base.per_owner) + math.fsum(analytic)
    q_err = far.error + base.error
    converged = far.converged and base.converged

    etas, I_vals, extrap = [], [], []
    ring_sum: list[float] = []
    eta = eta_start
    residual = math.inf
    for level in range(max_levels + 1):
        if level > 0:
            prev, eta = eta, eta / 2
            ring, _ = polar_patches(h, [np.array([eta, prev])] * len(active), qtol / 4)
            ring_sum.append(ring.total)
            q_err += ring.error
            converged &= ring.converged
        near_eta = near + math.fsum(ring_sum) - 2 * math.pi * math.log(eta) * chi_active
        I = 0.5 * (far.total + near_eta) + math.pi * math.log(eta) * chi_sum
        etas.append(eta)
        I_vals.append(I)
        if len(I_vals) >= 3:
            extrap.append(richardson(etas, I_vals))
        if len(extrap) >= 2:
            residual = abs(extrap[-1] - extrap[-2])
            if residual < tol:
                break
    report = EnergyReport(
        W_estimate=extrap[-1] if extrap else I_vals[-1],
        eta_sequence=etas,
        I_values=I_vals,
        extrapolants=extrap,
        residual=residual,
        tol=tol,
        quadrature_error=q_err,
        far_part=far.total,
        n_poles=len(pts),
        chi_sum=chi_sum,
        converged=converged and residual < tol,
    )
    if residual >= tol:
        raise ExtrapolationError(
            f"eta-extrapolation did not converge in {max_levels} levels: last residual {residual:.3e} >= tol {tol:.3e}",
            report,
        )
    return report


def _doubling(a: float, b: float) -> list[float]:
    """Points ``2a, 4a, ...`` strictly below ``b``, then ``b``."""
    out = []
    x = 2 * a
    while x < b * (1 - 1e-12):
        out.append(x)
        x *= 2
    out.append(b)
    return out


def energy_density(
    config_family: Callable[[float], PointConfig],
    background: BackgroundMeasure | str,
    R_values: Sequence[float],
    tol: float = 1e-3,
    region_family: Callable[[float], Region] | None = None,
) -> list[dict]:
    """``W(j, chi_{U_R}) / |U_R|`` for each ``R``; ``U_R`` defaults to the ball ``B(0, R)``."""
    out = []
    for R in R_values:
        cfg = config_family(R)
        region = region_family(R) if region_family else Region.ball((0.0, 0.0), R)
        chi = make_standard_cutoff(region)
        rep = renormalized_energy(synthetic_j(cfg, background), chi, cfg, tol=tol)
        out.append(
            {
                "R": float(R),
                "n": cfg.n,
                "W": rep.W_estimate,
                "area": region.area,
                "W_per_area": rep.W_estimate / region.area,
                "error": rep.residual + rep.quadrature_error,
            }
        )
    return out
