"""Riemannian manifolds used by the regression code.

Points and tangent vectors are plain numpy arrays in ambient coordinates.
A tangent vector's base point is implicit: every operation takes the base
point as its first argument.  Sphere and Euclidean operations act on the
last axis and broadcast over leading axes, which is what lets the power
manifold and the batched de Casteljau ladder reuse them directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# below this angle sin(x)/x and friends switch to their Taylor series
SMALL_ANGLE = 1e-6
# log on the sphere refuses pairs with <x, y> at or below -1 + CUT_LOCUS_TOL
CUT_LOCUS_TOL = 1e-9


class DomainError(ValueError):
    """Raised when an operation leaves the domain where log is defined."""


def _sinc(phi):
    phi = np.asarray(phi, dtype=float)
    small = phi < SMALL_ANGLE
    safe = np.where(small, 1.0, phi)
    return np.where(small, 1.0 - phi**2 / 6.0, np.sin(safe) / safe)


def _inv_sinc(phi):
    """phi / sin(phi), finite at zero."""
    phi = np.asarray(phi, dtype=float)
    small = phi < SMALL_ANGLE
    safe = np.where(small, 1.0, phi)
    return np.where(small, 1.0 + phi**2 / 6.0, safe / np.sin(safe))


def _dot(a, b):
    return np.sum(a * b, axis=-1)


@dataclass(frozen=True)
class ChartBasis:
    """Orthonormal basis of a tangent space, used as exponential chart."""

    base: np.ndarray
    vectors: np.ndarray  # shape (dim, *base.shape)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def coords(self, v: np.ndarray) -> np.ndarray:
        """Chart coordinates of the tangent vector ``v``."""
        flat = self.vectors.reshape(self.dim, -1)
        return flat @ np.asarray(v, dtype=float).reshape(-1)

    def vector(self, c: np.ndarray) -> np.ndarray:
        """Tangent vector with chart coordinates ``c``."""
        flat = self.vectors.reshape(self.dim, -1)
        return (np.asarray(c, dtype=float) @ flat).reshape(self.base.shape)

    def rotated(self, q: np.ndarray) -> "ChartBasis":
        """Basis whose k-th vector is sum_j q[k, j] e_j (q orthogonal)."""
        flat = self.vectors.reshape(self.dim, -1)
        return ChartBasis(self.base, (q @ flat).reshape(self.vectors.shape))


class Manifold:
    """Interface shared by the concrete geometries.

    Subclasses provide ``exp``, ``log``, ``dist``, ``inner``, ``proj``,
    ``dexp``, ``adjoint_dexp``, ``basis`` and ``geodesic_vjp``.
    """

    dim: int
    point_shape: tuple

    def norm(self, x, v):
        return np.sqrt(max(float(self.inner(x, v, v)), 0.0))

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-len(self.point_shape):] != self.point_shape:
            raise ValueError(f"expected point shape {self.point_shape}, got {x.shape}")
        return x

    def random_point(self, rng):
        raise NotImplementedError

    def random_tangent(self, x, rng, scale=1.0):
        b = self.basis(x)
        return b.vector(scale * rng.standard_normal(b.dim))


class Euclidean(Manifold):
    """Flat space R^d."""

    def __init__(self, d: int):
        if d < 1:
            raise ValueError("dimension must be positive")
        self.dim = d
        self.point_shape = (d,)

    def __repr__(self):
        return f"Euclidean({self.dim})"

    def __eq__(self, other):
        return isinstance(other, Euclidean) and other.dim == self.dim

    def __hash__(self):
        return hash(("Euclidean", self.dim))

    @property
    def descriptor(self):
        return {"type": "euclidean", "dim": self.dim}

    def _check_pair(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape[-1] != self.dim or b.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape} in R^{self.dim}")
        return a, b

    def exp(self, x, v):
        x, v = self._check_pair(x, v)
        return x + v

    def log(self, x, y):
        x, y = self._check_pair(x, y)
        return y - x

    def dist(self, x, y):
        x, y = self._check_pair(x, y)
        return np.sqrt(_dot(y - x, y - x))

    def inner(self, x, u, w):
        u, w = self._check_pair(u, w)
        return _dot(u, w)

    def proj(self, x, v):
        return np.asarray(v, dtype=float)

    def dexp(self, x, v, w):
        return np.asarray(w, dtype=float).copy()

    def adjoint_dexp(self, x, v, u):
        return np.asarray(u, dtype=float).copy()

    def inverse_adjoint_dexp(self, x, v, a):
        return np.asarray(a, dtype=float).copy()

    def geodesic(self, x, y, t):
        x, y = self._check_pair(x, y)
        t = np.asarray(t, dtype=float)[..., None]
        return x + t * (y - x)

    def geodesic_vjp(self, x, y, t, gbar):
        t = np.asarray(t, dtype=float)[..., None]
        return (1.0 - t) * gbar, t * gbar

    def basis(self, x):
        x = self.check_point(x)
        return ChartBasis(x.copy(), np.eye(self.dim))

    def random_point(self, rng):
        return rng.standard_normal(self.dim)


class Sphere(Manifold):
    """Unit sphere S^2 embedded in R^3."""

    dim = 2
    point_shape = (3,)

    def __repr__(self):
        return "Sphere()"

    def __eq__(self, other):
        return isinstance(other, Sphere)

    def __hash__(self):
        return hash("Sphere")

    @property
    def descriptor(self):
        return {"type": "sphere", "dim": 2}

    def _check_pair(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape[-1] != 3 or b.shape[-1] != 3:
            raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape} on S^2")
        return a, b

    def exp(self, x, v):
        x, v = self._check_pair(x, v)
        phi = np.sqrt(_dot(v, v))[..., None]
        y = np.cos(phi) * x + _sinc(phi) * v
        return y / np.sqrt(_dot(y, y))[..., None]

    def log(self, x, y):
        x, y = self._check_pair(x, y)
        c = _dot(x, y)
        if np.any(c <= -1.0 + CUT_LOCUS_TOL):
            raise DomainError("log on S^2 is undefined for (nearly) antipodal points")
        w = y - c[..., None] * x
        s = np.sqrt(_dot(w, w))
        phi = np.arctan2(s, c)
        return _inv_sinc(phi)[..., None] * w

    def dist(self, x, y):
        x, y = self._check_pair(x, y)
        s = np.linalg.norm(np.cross(x, y), axis=-1)
        return np.arctan2(s, _dot(x, y))

    def inner(self, x, u, w):
        u, w = self._check_pair(u, w)
        return _dot(u, w)

    def proj(self, x, v):
        x, v = self._check_pair(x, v)
        return v - _dot(v, x)[..., None] * x

    def _frame(self, x, v):
        L = np.sqrt(_dot(v, v))
        if np.any(L >= np.pi):
            raise DomainError("tangent vector reaches the cut locus (|v| >= pi)")
        safe = np.where(L > 0, L, 1.0)[..., None]
        e = v / safe
        Lc = L[..., None]
        e_end = -np.sin(Lc) * x + np.cos(Lc) * e
        return L, e, e_end

    def dexp(self, x, v, w):
        """Differential of exp_x at v applied to w.

        Radial part is carried to the end-point velocity direction, the rest
        is scaled by sin|v|/|v| (Jacobi field on the unit sphere).
        """
        x, v = self._check_pair(x, v)
        w = self.proj(x, w)
        L, e, e_end = self._frame(x, v)
        a = _dot(w, e)[..., None]
        out = a * e_end + _sinc(L)[..., None] * (w - a * e)
        return np.where((L > 0)[..., None], out, w)

    def adjoint_dexp(self, x, v, u):
        x, v = self._check_pair(x, v)
        y = self.exp(x, v)
        u = self.proj(y, u)
        L, e, e_end = self._frame(x, v)
        a = _dot(u, e_end)[..., None]
        out = a * e + _sinc(L)[..., None] * (u - a * e_end)
        return np.where((L > 0)[..., None], out, u)

    def inverse_adjoint_dexp(self, x, v, a):
        """Inverse of ``adjoint_dexp(x, v, .)``: maps T_x to T_exp_x(v)."""
        x, v = self._check_pair(x, v)
        a = self.proj(x, a)
        L, e, e_end = self._frame(x, v)
        r = _dot(a, e)[..., None]
        out = r * e_end + _inv_sinc(L)[..., None] * (a - r * e)
        return np.where((L > 0)[..., None], out, a)

    def geodesic(self, x, y, t):
        x, y = self._check_pair(x, y)
        t = np.asarray(t, dtype=float)[..., None]
        return self.exp(x, t * self.log(x, y))

    def geodesic_vjp(self, x, y, t, gbar):
        """Pull back an ambient cotangent through (x, y) -> geodesic(x, y, t).

        Differentiates the slerp formula (sin((1-t)th) x + sin(t th) y) / sin th,
        a smooth ambient extension of the geodesic map.  Cotangents returned
        are ambient; project them onto the tangent spaces only at the leaves.
        """
        x, y = self._check_pair(x, y)
        t = np.asarray(t, dtype=float)[..., None]
        c = np.clip(_dot(x, y), -1.0, 1.0)[..., None]
        th = np.arctan2(np.linalg.norm(np.cross(x, y), axis=-1)[..., None], c)
        small = th < 1e-4
        ths = np.where(small, 1.0, th)
        s = np.sin(ths)
        u = 1.0 - t
        a = np.where(small, u * (1 + (1 - u**2) * th**2 / 6), np.sin(u * ths) / s)
        b = np.where(small, t * (1 + (1 - t**2) * th**2 / 6), np.sin(t * ths) / s)
        # d/dth of a, b divided by -sin(th)
        da = (u * np.cos(u * ths) * s - np.sin(u * ths) * np.cos(ths)) / s**2
        db = (t * np.cos(t * ths) * s - np.sin(t * ths) * np.cos(ths)) / s**2
        qa = np.where(small, -u * (1 - u**2) / 3.0, -da / s)
        qb = np.where(small, -t * (1 - t**2) / 3.0, -db / s)
        q = (qa * _dot(gbar, x)[..., None]) + (qb * _dot(gbar, y)[..., None])
        return a * gbar + q * y, b * gbar + q * x

    def basis(self, x):
        """Gram-Schmidt of the two coordinate axes least aligned with x."""
        x = self.check_point(x)
        order = np.argsort(np.abs(x), kind="stable")[:2]
        vecs = []
        for k in order:
            e = np.zeros(3)
            e[k] = 1.0
            e = e - np.dot(e, x) * x
            for f in vecs:
                e = e - np.dot(e, f) * f
            vecs.append(e / np.linalg.norm(e))
        return ChartBasis(x.copy(), np.array(vecs))

    def random_point(self, rng):
        p = rng.standard_normal(3)
        return p / np.linalg.norm(p)


class PowerManifold(Manifold):
    """n-fold product M^n with the product metric; points have shape (n, *M.point_shape)."""

    def __init__(self, base: Manifold, n: int):
        if n < 1:
            raise ValueError("power must be positive")
        self.base = base
        self.n = n
        self.dim = n * base.dim
        self.point_shape = (n,) + tuple(base.point_shape)

    def __repr__(self):
        return f"PowerManifold({self.base!r}, {self.n})"

    def __eq__(self, other):
        return isinstance(other, PowerManifold) and other.base == self.base and other.n == self.n

    def __hash__(self):
        return hash(("Power", self.base, self.n))

    @property
    def descriptor(self):
        return {"type": "power", "n": self.n, "base": self.base.descriptor}

    def _check(self, *arrs):
        out = []
        for a in arrs:
            a = np.asarray(a, dtype=float)
            if a.shape[-len(self.point_shape):] != self.point_shape:
                raise ValueError(f"expected shape {self.point_shape}, got {a.shape}")
            out.append(a)
        return out

    def exp(self, x, v):
        x, v = self._check(x, v)
        return self.base.exp(x, v)

    def log(self, x, y):
        x, y = self._check(x, y)
        return self.base.log(x, y)

    def dist(self, x, y):
        x, y = self._check(x, y)
        return np.sqrt(np.sum(self.base.dist(x, y) ** 2, axis=-1))

    def inner(self, x, u, w):
        u, w = self._check(u, w)
        return np.sum(self.base.inner(x, u, w), axis=-1)

    def proj(self, x, v):
        return self.base.proj(x, v)

    def dexp(self, x, v, w):
        return self.base.dexp(x, v, w)

    def adjoint_dexp(self, x, v, u):
        return self.base.adjoint_dexp(x, v, u)

    def inverse_adjoint_dexp(self, x, v, a):
        return self.base.inverse_adjoint_dexp(x, v, a)

    def geodesic(self, x, y, t):
        return self.base.geodesic(x, y, t)

    def basis(self, x):
        (x,) = self._check(x)
        d = self.base.dim
        vecs = np.zeros((self.dim,) + self.point_shape)
        for j in range(self.n):
            vecs[j * d:(j + 1) * d, j] = self.base.basis(x[j]).vectors
        return ChartBasis(x.copy(), vecs)

    def random_point(self, rng):
        return np.stack([self.base.random_point(rng) for _ in range(self.n)])


def manifold_from_descriptor(desc: dict) -> Manifold:
    kind = desc["type"]
    if kind == "sphere":
        return Sphere()
    if kind == "euclidean":
        return Euclidean(int(desc["dim"]))
    if kind == "power":
        return PowerManifold(manifold_from_descriptor(desc["base"]), int(desc["n"]))
    raise ValueError(f"unknown manifold type {kind!r}")
