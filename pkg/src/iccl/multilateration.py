"""Anchor-based 2-D multilateration.

Squaring ``||p - a_i|| = d_i`` and subtracting the last anchor's equation
leaves a linear system ``A p = b`` with

    A[i] = 2 (a_last - a_i)
    b[i] = ||a_last||^2 - ||a_i||^2 - d_last^2 + d_i^2

solved in the least-squares sense through an SVD. Gauss-Newton on the range
residuals ``||p - a_i|| - d_i`` then polishes each estimate, accepting only
steps that lower the nonlinear residual.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, InvalidArgument

RANK_TOL = 1e-10


@dataclass(frozen=True)
class PositionEstimate:
    position: np.ndarray
    residual: float  # ||range residuals|| at ``position``, meters
    condition: float  # 2-norm condition number of the linearized system
    linear_residual: float = float("nan")
    iterations: int = 0
    degenerate: bool = False
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and bool(np.all(np.isfinite(self.position)))


def _check_anchors(anchors) -> np.ndarray:
    anchors = np.asarray(anchors, dtype=float)
    if anchors.ndim != 2 or anchors.shape[1] != 2:
        raise InvalidArgument("anchors must be an (M_a, 2) array")
    if len(anchors) < 3:
        raise InvalidArgument(f"2-D multilateration needs at least 3 anchors, got {len(anchors)}")
    return anchors


def linear_system(anchors):
    """``A`` and the distance-independent part of ``b``."""
    ref = anchors[-1]
    a_mat = 2.0 * (ref - anchors[:-1])
    b0 = ref @ ref - np.einsum("ij,ij->i", anchors[:-1], anchors[:-1])
    return a_mat, b0


def _factor(anchors):
    a_mat, b0 = linear_system(anchors)
    u, s, vt = np.linalg.svd(a_mat, full_matrices=False)
    if s[-1] <= RANK_TOL * s[0]:
        raise DegenerateGeometry("anchors are collinear; the linearized system is rank deficient")
    return u, s, vt, a_mat, b0


def range_residuals(positions, anchors, distances) -> np.ndarray:
    """``||p_u - a_i|| - d_{u,i}`` for positions (U, 2), distances (U, M_a)."""
    return np.linalg.norm(positions[:, None, :] - anchors[None], axis=2) - distances


def _linearized(anchors, distances):
    u, s, vt, a_mat, b0 = _factor(anchors)
    sq = distances ** 2
    b = b0[None, :] - sq[:, -1:] + sq[:, :-1]  # (U, M_a - 1)
    pos = ((b @ u) / s) @ vt
    lin_res = np.linalg.norm(pos @ a_mat.T - b, axis=1)
    return pos, lin_res, float(s[0] / s[-1])


def linearized_solve(anchors, distances) -> PositionEstimate:
    anchors = _check_anchors(anchors)
    d = np.asarray(distances, dtype=float).reshape(1, -1)
    if d.shape[1] != len(anchors):
        raise InvalidArgument(f"{d.shape[1]} distances for {len(anchors)} anchors")
    pos, lin_res, cond = _linearized(anchors, d)
    res = float(np.linalg.norm(range_residuals(pos, anchors, d)))
    return PositionEstimate(pos[0], res, cond, float(lin_res[0]))


def gauss_newton(positions, anchors, distances, max_iter: int = 50, tol: float = 1e-6):
    """Batched Gauss-Newton with step halving.

    Returns ``(positions, iterations, degenerate)``; every output position has
    a nonlinear residual no larger than its input.
    """
    p = np.array(positions, dtype=float, copy=True)
    n_u = len(p)
    iters = np.zeros(n_u, dtype=int)
    degenerate = np.zeros(n_u, dtype=bool)
    active = np.all(np.isfinite(p), axis=1)
    obj = np.sum(range_residuals(p, anchors, distances) ** 2, axis=1)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        diff = p[idx, None, :] - anchors[None]
        rng = np.linalg.norm(diff, axis=2)
        on_anchor = np.any(rng == 0, axis=1)
        jac = diff / np.where(rng == 0, 1.0, rng)[..., None]
        r = rng - distances[idx]
        q, rr = np.linalg.qr(jac)
        rhs = -np.einsum("uki,uk->ui", q, r)
        r00, r01, r11 = rr[:, 0, 0], rr[:, 0, 1], rr[:, 1, 1]
        scale = np.maximum(np.abs(r00), 1e-300)
        rank_def = on_anchor | (np.abs(r11) <= RANK_TOL * scale) | (np.abs(r00) == 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            dy = rhs[:, 1] / r11
            dx = (rhs[:, 0] - r01 * dy) / r00
        step = np.column_stack([dx, dy])
        degenerate[idx[rank_def]] = True
        active[idx[rank_def]] = False
        ok = ~rank_def
        idx, step = idx[ok], step[ok]
        alpha = np.ones(len(idx))
        accepted = np.zeros(len(idx), dtype=bool)
        for _halve in range(30):
            todo = ~accepted
            if not todo.any():
                break
            cand = p[idx[todo]] + alpha[todo, None] * step[todo]
            c_obj = np.sum(range_residuals(cand, anchors, distances[idx[todo]]) ** 2, axis=1)
            better = c_obj < obj[idx[todo]]
            hit = np.flatnonzero(todo)[better]
            p[idx[hit]] = cand[better]
            obj[idx[hit]] = c_obj[better]
            accepted[hit] = True
            alpha[todo & ~accepted] *= 0.5
        iters[idx] += 1
        moved = alpha * np.linalg.norm(step, axis=1)
        active[idx[~accepted | (moved < tol)]] = False
    return p, iters, degenerate


def refine(initial: PositionEstimate, anchors, distances, max_iter: int = 50, tol: float = 1e-6) -> PositionEstimate:
    anchors = _check_anchors(anchors)
    d = np.asarray(distances, dtype=float).reshape(1, -1)
    p, iters, degenerate = gauss_newton(initial.position.reshape(1, 2), anchors, d, max_iter, tol)
    res = float(np.linalg.norm(range_residuals(p, anchors, d)))
    return PositionEstimate(
        p[0], res, initial.condition, initial.linear_residual, int(iters[0]), bool(degenerate[0]) or initial.degenerate
    )


def locate(anchors, distances, iterative: bool = True, max_iter: int = 50, tol: float = 1e-6) -> np.ndarray:
    """Positions (U, 2) for distances (M_a, U). Fast path used by the harness.

    Raises:
        DegenerateGeometry: the anchors are collinear.
    """
    anchors = _check_anchors(anchors)
    d = np.asarray(distances, dtype=float).T
    pos, _, _ = _linearized(anchors, d)
    if iterative:
        pos, _, _ = gauss_newton(pos, anchors, d, max_iter, tol)
    return pos


def localize_all(anchors, estimates, iterative: bool = True, max_iter: int = 50, tol: float = 1e-6):
    """Per-unknown solve (+ refine) for a distance matrix ``estimates[anchor, unknown]``.

    A bad column (non-finite or negative distance) only fails its own
    unknown; the returned list keeps input order and failed entries carry
    ``error`` and a NaN position. Collinear anchors fail every unknown.
    """
    anchors = _check_anchors(anchors)
    est = np.asarray(estimates, dtype=float)
    if est.ndim != 2 or est.shape[0] != len(anchors):
        raise InvalidArgument(f"distance matrix must be ({len(anchors)}, n_unknowns)")
    n_u = est.shape[1]
    nan2 = np.full(2, np.nan)
    try:
        _factor(anchors)
    except DegenerateGeometry as exc:
        return [PositionEstimate(nan2, np.nan, np.inf, error=str(exc), degenerate=True) for _ in range(n_u)]

    d = est.T
    good = np.all(np.isfinite(d) & (d >= 0), axis=1)
    out: list[PositionEstimate | None] = [None] * n_u
    for u in np.flatnonzero(~good):
        out[u] = PositionEstimate(nan2, np.nan, np.nan, error="distance estimates must be finite and non-negative")
    gi = np.flatnonzero(good)
    if gi.size:
        pos, lin_res, cond = _linearized(anchors, d[gi])
        iters = np.zeros(len(gi), dtype=int)
        degenerate = np.zeros(len(gi), dtype=bool)
        if iterative:
            pos, iters, degenerate = gauss_newton(pos, anchors, d[gi], max_iter, tol)
        res = np.linalg.norm(range_residuals(pos, anchors, d[gi]), axis=1)
        for k, u in enumerate(gi):
            out[u] = PositionEstimate(pos[k], float(res[k]), cond, float(lin_res[k]), int(iters[k]), bool(degenerate[k]))
    return out
