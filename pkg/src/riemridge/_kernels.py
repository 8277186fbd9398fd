"""Compiled inner loops for the sphere and flat-space objectives.

These evaluate exactly the same formulas as the numpy code in
``manifolds``/``bezier``/``fitting`` (log-then-exp geodesic interpolation,
slerp pull-back), one time sample at a time, without per-call array
overhead.  A nonzero status means a log was requested at the cut locus.
"""
import math

import numpy as np
from numba import njit

CUT = -1.0 + 1e-9
SMALL = 1e-6


@njit(cache=True, inline="always")
def _sphere_log(x0, x1, x2, y0, y1, y2):
    c = x0 * y0 + x1 * y1 + x2 * y2
    w0 = y0 - c * x0
    w1 = y1 - c * x1
    w2 = y2 - c * x2
    s = math.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
    phi = math.atan2(s, c)
    f = 1.0 + phi * phi / 6.0 if phi < SMALL else phi / math.sin(phi)
    return f * w0, f * w1, f * w2, c


@njit(cache=True, inline="always")
def _sphere_exp(x0, x1, x2, v0, v1, v2):
    phi = math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
    cs = math.cos(phi)
    sc = 1.0 - phi * phi / 6.0 if phi < SMALL else math.sin(phi) / phi
    z0 = cs * x0 + sc * v0
    z1 = cs * x1 + sc * v1
    z2 = cs * x2 + sc * v2
    nz = math.sqrt(z0 * z0 + z1 * z1 + z2 * z2)
    return z0 / nz, z1 / nz, z2 / nz


@njit(cache=True)
def _sphere_ladder(b, t, Q):
    n = b.shape[0]
    for i in range(n):
        for d in range(3):
            Q[0, i, d] = b[i, d]
    for k in range(1, n):
        for i in range(n - k):
            x0, x1, x2 = Q[k - 1, i, 0], Q[k - 1, i, 1], Q[k - 1, i, 2]
            v0, v1, v2, c = _sphere_log(x0, x1, x2, Q[k - 1, i + 1, 0], Q[k - 1, i + 1, 1], Q[k - 1, i + 1, 2])
            if c <= CUT:
                return 1
            z0, z1, z2 = _sphere_exp(x0, x1, x2, t * v0, t * v1, t * v2)
            Q[k, i, 0] = z0
            Q[k, i, 1] = z1
            Q[k, i, 2] = z2
    if t == 0.0:
        for d in range(3):
            Q[n - 1, 0, d] = b[0, d]
    elif t == 1.0:
        for d in range(3):
            Q[n - 1, 0, d] = b[n - 1, d]
    return 0


@njit(cache=True)
def _sphere_dist(x0, x1, x2, y0, y1, y2):
    c0 = x1 * y2 - x2 * y1
    c1 = x2 * y0 - x0 * y2
    c2 = x0 * y1 - x1 * y0
    return math.atan2(math.sqrt(c0 * c0 + c1 * c1 + c2 * c2), x0 * y0 + x1 * y1 + x2 * y2)


@njit(cache=True)
def sphere_h(b, times, y):
    n = b.shape[0]
    Q = np.empty((n, n, 3))
    h = 0.0
    for m in range(times.shape[0]):
        if _sphere_ladder(b, times[m], Q) != 0:
            return h, 1
        d = _sphere_dist(y[m, 0], y[m, 1], y[m, 2], Q[n - 1, 0, 0], Q[n - 1, 0, 1], Q[n - 1, 0, 2])
        h += d * d
    return h, 0


@njit(cache=True)
def _slerp_vjp(x, y, t, g, xb, yb):
    c = x[0] * y[0] + x[1] * y[1] + x[2] * y[2]
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    th = _sphere_dist(x[0], x[1], x[2], y[0], y[1], y[2])
    u = 1.0 - t
    if th < 1e-4:
        a = u * (1 + (1 - u * u) * th * th / 6)
        bb = t * (1 + (1 - t * t) * th * th / 6)
        qa = -u * (1 - u * u) / 3.0
        qb = -t * (1 - t * t) / 3.0
    else:
        s = math.sin(th)
        ct = math.cos(th)
        a = math.sin(u * th) / s
        bb = math.sin(t * th) / s
        da = (u * math.cos(u * th) * s - math.sin(u * th) * ct) / (s * s)
        db = (t * math.cos(t * th) * s - math.sin(t * th) * ct) / (s * s)
        qa = -da / s
        qb = -db / s
    q = qa * (g[0] * x[0] + g[1] * x[1] + g[2] * x[2]) + qb * (g[0] * y[0] + g[1] * y[1] + g[2] * y[2])
    for d in range(3):
        xb[d] += a * g[d] + q * y[d]
        yb[d] += bb * g[d] + q * x[d]


@njit(cache=True)
def sphere_h_grad(b, times, y):
    n = b.shape[0]
    Q = np.empty((n, n, 3))
    bar = np.zeros((n, 3))
    new = np.zeros((n, 3))
    grad = np.zeros((n, 3))
    h = 0.0
    for m in range(times.shape[0]):
        t = times[m]
        if _sphere_ladder(b, t, Q) != 0:
            return h, grad, 1
        p0, p1, p2 = Q[n - 1, 0, 0], Q[n - 1, 0, 1], Q[n - 1, 0, 2]
        d = _sphere_dist(y[m, 0], y[m, 1], y[m, 2], p0, p1, p2)
        h += d * d
        l0, l1, l2, c = _sphere_log(p0, p1, p2, y[m, 0], y[m, 1], y[m, 2])
        if c <= CUT:
            return h, grad, 1
        bar[:, :] = 0.0
        bar[0, 0] = -2.0 * l0
        bar[0, 1] = -2.0 * l1
        bar[0, 2] = -2.0 * l2
        for k in range(n - 1, 0, -1):
            new[:, :] = 0.0
            for i in range(n - k):
                _slerp_vjp(Q[k - 1, i], Q[k - 1, i + 1], t, bar[i], new[i], new[i + 1])
            bar[:, :] = new
        grad += bar
    for j in range(n):
        r = grad[j, 0] * b[j, 0] + grad[j, 1] * b[j, 1] + grad[j, 2] * b[j, 2]
        for d in range(3):
            grad[j, d] -= r * b[j, d]
    return h, grad, 0


@njit(cache=True)
def _flat_point(b, t, Q):
    n = b.shape[0]
    D = b.shape[1]
    Q[0, :n, :] = b
    for k in range(1, n):
        for i in range(n - k):
            for d in range(D):
                Q[k, i, d] = Q[k - 1, i, d] + t * (Q[k - 1, i + 1, d] - Q[k - 1, i, d])
    if t == 0.0:
        Q[n - 1, 0, :] = b[0]
    elif t == 1.0:
        Q[n - 1, 0, :] = b[n - 1]


@njit(cache=True)
def flat_h(b, times, y):
    n, D = b.shape
    Q = np.empty((n, n, D))
    h = 0.0
    for m in range(times.shape[0]):
        _flat_point(b, times[m], Q)
        for d in range(D):
            r = y[m, d] - Q[n - 1, 0, d]
            h += r * r
    return h


@njit(cache=True)
def flat_h_grad(b, times, y):
    n, D = b.shape
    Q = np.empty((n, n, D))
    grad = np.zeros((n, D))
    bar = np.zeros((n, D))
    new = np.zeros((n, D))
    h = 0.0
    for m in range(times.shape[0]):
        t = times[m]
        _flat_point(b, t, Q)
        bar[:, :] = 0.0
        for d in range(D):
            r = y[m, d] - Q[n - 1, 0, d]
            h += r * r
            bar[0, d] = -2.0 * r
        for k in range(n - 1, 0, -1):
            new[:, :] = 0.0
            for i in range(n - k):
                for d in range(D):
                    new[i, d] += (1.0 - t) * bar[i, d]
                    new[i + 1, d] += t * bar[i, d]
            bar[:, :] = new
        grad += bar
    return h, grad


@njit(cache=True)
def sphere_mahalanobis(mu, E, S, x, want_grad):
    """Value c^T S c and gradient 2 (d Log_mu)^* S Log_mu x on (S^2)^n.

    ``E`` is the chart basis flattened to shape (2n, 3n).
    """
    n = mu.shape[0]
    u = np.empty(3 * n)
    for j in range(n):
        u0, u1, u2, c = _sphere_log(mu[j, 0], mu[j, 1], mu[j, 2], x[j, 0], x[j, 1], x[j, 2])
        if c <= CUT:
            return 0.0, np.zeros((n, 3)), 1
        u[3 * j] = u0
        u[3 * j + 1] = u1
        u[3 * j + 2] = u2
    cc = E @ u
    sc = S @ cc
    val = cc @ sc
    grad = np.zeros((n, 3))
    if not want_grad:
        return val, grad, 0
    su = E.T @ sc
    for j in range(n):
        m0, m1, m2 = mu[j, 0], mu[j, 1], mu[j, 2]
        u0, u1, u2 = u[3 * j], u[3 * j + 1], u[3 * j + 2]
        a0, a1, a2 = su[3 * j], su[3 * j + 1], su[3 * j + 2]
        r = a0 * m0 + a1 * m1 + a2 * m2
        a0 -= r * m0
        a1 -= r * m1
        a2 -= r * m2
        L = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
        if L >= math.pi:
            return val, grad, 1
        if L == 0.0:
            grad[j, 0] = 2.0 * a0
            grad[j, 1] = 2.0 * a1
            grad[j, 2] = 2.0 * a2
            continue
        e0, e1, e2 = u0 / L, u1 / L, u2 / L
        sl = math.sin(L)
        cl = math.cos(L)
        f0, f1, f2 = -sl * m0 + cl * e0, -sl * m1 + cl * e1, -sl * m2 + cl * e2
        rr = a0 * e0 + a1 * e1 + a2 * e2
        k = 1.0 + L * L / 6.0 if L < SMALL else L / sl
        grad[j, 0] = 2.0 * (rr * f0 + k * (a0 - rr * e0))
        grad[j, 1] = 2.0 * (rr * f1 + k * (a1 - rr * e1))
        grad[j, 2] = 2.0 * (rr * f2 + k * (a2 - rr * e2))
    return val, grad, 0
