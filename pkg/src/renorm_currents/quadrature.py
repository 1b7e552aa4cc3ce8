"""Adaptive tensor Gauss-Legendre cubature on parameter rectangles, and Richardson extrapolation.

Cells are ``[u0, u1] x [v0, v1]`` in whatever coordinates the integrand
uses (the integrand includes its own Jacobian). Each leaf carries the 4x4
rule on itself and on its four children; the difference is the error
indicator. Refinement is global: leaves whose indicator exceeds their fair
share of the remaining error are split until the summed indicator is below
tolerance. The cell ordering is deterministic, and per-owner totals use
compensated summation, so results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

GL_ORDER = 4
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(GL_ORDER)


@dataclass(frozen=True)
class CubatureResult:
    total: float
    per_owner: np.ndarray
    error: float
    n_leaves: int
    converged: bool


def _children(cells: np.ndarray) -> np.ndarray:
    u0, u1, v0, v1 = cells.T
    um, vm = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
    kids = np.stack(
        [
            np.stack([u0, um, v0, vm], -1),
            np.stack([um, u1, v0, vm], -1),
            np.stack([u0, um, vm, v1], -1),
            np.stack([um, u1, vm, v1], -1),
        ],
        axis=1,
    )
    return kids.reshape(-1, 4)


def _rule(func: Callable, cells: np.ndarray) -> np.ndarray:
    """4x4 Gauss-Legendre value on every cell."""
    u0, u1, v0, v1 = cells.T
    hu, hv = 0.5 * (u1 - u0), 0.5 * (v1 - v0)
    cu, cv = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
    U = cu[:, None, None] + hu[:, None, None] * _NODES[None, :, None]
    V = cv[:, None, None] + hv[:, None, None] * _NODES[None, None, :]
    U, V = np.broadcast_arrays(U, V)
    vals = np.asarray(func(U.reshape(-1), V.reshape(-1)), dtype=float).reshape(U.shape)
    w = _WEIGHTS[:, None] * _WEIGHTS[None, :]
    return np.einsum("ijk,jk->i", vals, w) * hu * hv


def _estimate(func, cells, chunk: int = 4096):
    fine = np.empty(len(cells))
    coarse = np.empty(len(cells))
    for s in range(0, len(cells), chunk):
        block = cells[s : s + chunk]
        coarse[s : s + chunk] = _rule(func, block)
        fine[s : s + chunk] = _rule(func, _children(block)).reshape(-1, 4).sum(axis=1)
    return fine, np.abs(fine - coarse)


def adaptive_cubature(
    func: Callable[[np.ndarray, np.ndarray], np.ndarray],
    cells,
    tol: float,
    owners=None,
    max_leaves: int = 400_000,
    max_rounds: int = 60,
) -> CubatureResult:
    """Integrate ``func`` over the union of ``cells`` to absolute tolerance ``tol``.

    ``owners`` tags each initial cell (default: its index); ``per_owner``
    returns the integral restricted to each tag.
    """
    cells = np.asarray(cells, dtype=float).reshape(-1, 4)
    owners = np.arange(len(cells)) if owners is None else np.asarray(owners, dtype=int)
    n_owner = int(owners.max()) + 1 if len(owners) else 0
    if len(cells) == 0:
        return CubatureResult(0.0, np.zeros(n_owner), 0.0, 0, True)

    done_val, done_own = [], []
    accepted_err = 0.0
    val, err = _estimate(func, cells)
    converged = False
    for _ in range(max_rounds):
        if math.fsum(err) <= tol:
            converged = True
            break
        if len(cells) > max_leaves:
            break
        # split the leaves above their fair share of the tolerance, keep the rest
        split = err > tol / len(cells)
        done_val.append(val[~split])
        done_own.append(owners[~split])
        spent = math.fsum(err[~split])
        accepted_err += spent
        tol -= spent
        cells, owners = _children(cells[split]), np.repeat(owners[split], 4)
        if len(cells) == 0:
            converged = True
            break
        val, err = _estimate(func, cells)
    done_val.append(val)
    done_own.append(owners)
    vals = np.concatenate(done_val)
    owns = np.concatenate(done_own)
    order = np.argsort(owns, kind="stable")
    groups = np.split(vals[order], np.cumsum(np.bincount(owns, minlength=n_owner))[:-1])
    per_owner = np.array([math.fsum(g) for g in groups])
    return CubatureResult(
        total=math.fsum(per_owner),
        per_owner=per_owner,
        error=accepted_err + math.fsum(err),
        n_leaves=len(vals),
        converged=converged,
    )


def richardson(etas, values) -> float:
    """Value at ``eta = 0`` of the quadratic ``W + c1 eta + c2 eta^2`` through the last three points."""
    e = np.asarray(etas[-3:], dtype=float)
    v = np.asarray(values[-3:], dtype=float)
    A = np.stack([np.ones(3), e, e**2], axis=1)
    return float(np.linalg.solve(A, v)[0])
