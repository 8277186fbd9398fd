"""Manifold-valued Bezier polynomials via the generalized de Casteljau algorithm.

A control tuple is an array of shape ``(n, *M.point_shape)``; ``n - 1`` is
the polynomial degree.
"""
from __future__ import annotations

import numpy as np

from .manifolds import DomainError, Manifold

MAX_CONTROL_POINTS = 16


def check_control(M: Manifold, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 + len(M.point_shape) or b.shape[1:] != tuple(M.point_shape):
        raise ValueError(f"control tuple must have shape (n, {M.point_shape}), got {b.shape}")
    n = b.shape[0]
    if n < 2:
        raise ValueError("a Bezier polynomial needs at least 2 control points")
    if n > MAX_CONTROL_POINTS:
        raise ValueError(f"at most {MAX_CONTROL_POINTS} control points are supported, got {n}")
    return b


def _ladder(M, b, t):
    """All levels of the de Casteljau triangle for parameters ``t`` (shape (T,))."""
    level = np.broadcast_to(b, (t.shape[0],) + b.shape)
    levels = [level]
    tt = t[:, None]
    for k in range(1, b.shape[0]):
        try:
            level = M.geodesic(level[:, :-1], level[:, 1:], np.broadcast_to(tt, level.shape[:2])[:, :-1])
        except DomainError as exc:
            raise DomainError(f"de Casteljau level {k}: {exc}") from exc
        levels.append(level)
    return levels


def de_casteljau(M: Manifold, b, t):
    """Evaluate the Bezier polynomial with control points ``b`` at ``t``.

    ``t`` may be a scalar or a 1-d array; the result has shape
    ``M.point_shape`` or ``(len(t), *M.point_shape)`` accordingly.  Values of
    ``t`` outside [0, 1] extrapolate along the same geodesic construction.
    """
    b = check_control(M, b)
    scalar = np.ndim(t) == 0
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = _ladder(M, b, ts)[-1][:, 0]
    # endpoints are reproduced exactly, not up to rounding
    out = np.where((ts == 0.0)[:, None], b[0], out)
    out = np.where((ts == 1.0)[:, None], b[-1], out)
    return out[0] if scalar else out


def de_casteljau_vjp(M: Manifold, b, t, pbar) -> np.ndarray:
    """Pull back cotangents ``pbar`` (shape (T, *point_shape)) at p(t_i; b) to b.

    Returns the Riemannian gradient contribution at each control point, i.e.
    the ambient pull-back projected onto the tangent spaces of ``b``.
    """
    b = check_control(M, b)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    levels = _ladder(M, b, ts)
    bar = np.asarray(pbar, dtype=float)[:, None]
    tt = ts[:, None]
    for k in range(len(levels) - 1, 0, -1):
        prev = levels[k - 1]
        tk = np.broadcast_to(tt, prev.shape[:2])[:, :-1]
        xbar, ybar = M.geodesic_vjp(prev[:, :-1], prev[:, 1:], tk, bar)
        new = np.zeros_like(prev)
        new[:, :-1] += xbar
        new[:, 1:] += ybar
        bar = new
    return M.proj(b, bar.sum(axis=0))


def initial_guess(M: Manifold, first, last, n: int) -> np.ndarray:
    """Control points equally spaced on the geodesic from ``first`` to ``last``."""
    if n < 2 or n > MAX_CONTROL_POINTS:
        raise ValueError(f"n must lie in [2, {MAX_CONTROL_POINTS}], got {n}")
    first = M.check_point(first)
    last = M.check_point(last)
    v = M.log(first, last)
    s = np.linspace(0.0, 1.0, n)
    pts = M.exp(np.broadcast_to(first, (n,) + first.shape), s[:, None] * v)
    pts[0] = first
    pts[-1] = last
    return pts
