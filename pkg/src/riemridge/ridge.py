"""Intrinsic ridge regression: a Mahalanobis prior over Bezier control tuples.

The prior is the Frechet mean ``mu`` of the control tuples fitted to a set
of trajectories together with their empirical covariance in the exponential
chart at ``mu``.  The regularized objective is

    F(b) = H(b) + lam * g_mu(S Log_mu b, Log_mu b)

with S the (diagonally loaded) precision.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .bezier import initial_guess
from .fitting import (
    FitResult,
    SolverSettings,
    Trajectory,
    fit,
    frechet_mean,
    gradient_H,
    mean_for_r2,
    objective_H,
    r_squared,
    run_descent,
    total_variance_G,
)
from .manifolds import ChartBasis, DomainError, Euclidean, Manifold, PowerManifold, Sphere, manifold_from_descriptor

try:
    from . import _kernels
except ImportError:  # pragma: no cover - numba missing
    _kernels = None

DEFAULT_LOADING_REL = 1e-6


class PriorError(ValueError):
    pass


@dataclass
class Prior:
    manifold: PowerManifold
    mu: np.ndarray
    basis: ChartBasis
    sigma: np.ndarray
    loading: float
    precision: np.ndarray
    sqrt_precision: np.ndarray
    sample_count: int
    members: List[np.ndarray] = field(default_factory=list)
    member_ids: List[str] = field(default_factory=list)
    mean_length: float = float("nan")  # mean number of samples per member trajectory

    @property
    def n(self) -> int:
        return self.manifold.n

    @property
    def base(self) -> Manifold:
        return self.manifold.base

    @property
    def flat_basis(self) -> np.ndarray:
        """Chart basis as a (dim, ambient size) matrix."""
        return self.basis.vectors.reshape(self.basis.dim, -1)


def _loaded_inverse(sigma: np.ndarray, loading: float):
    w, V = np.linalg.eigh(sigma + loading * np.eye(len(sigma)))
    if np.any(w <= 0):
        raise PriorError("loaded covariance is not positive definite; increase the loading")
    S = (V / w) @ V.T
    W = (V / np.sqrt(w)) @ V.T
    return 0.5 * (S + S.T), 0.5 * (W + W.T)


def prior_from_members(
    M: Manifold,
    members: Sequence[np.ndarray],
    loading_rel: float = DEFAULT_LOADING_REL,
    settings: SolverSettings = SolverSettings(),
    member_ids: Optional[Sequence[str]] = None,
    mean_length: float = float("nan"),
) -> Prior:
    """Prior from already fitted control tuples."""
    members = [np.asarray(b, dtype=float) for b in members]
    l = len(members)
    if l < 2:
        raise PriorError(f"covariance needs at least 2 members, got {l}")
    n = members[0].shape[0]
    P = PowerManifold(M, n)
    mu = frechet_mean(P, np.stack(members), settings)
    basis = P.basis(mu)
    C = np.array([basis.coords(P.log(mu, b)) for b in members])
    sigma = C.T @ C / (l - 1)
    sigma = 0.5 * (sigma + sigma.T)
    tr = float(np.trace(sigma))
    if loading_rel < 0:
        raise PriorError("loading_rel must be non-negative")
    # zero scatter has no scale to be relative to; fall back to an absolute loading
    loading = loading_rel * tr / basis.dim if tr > 0 else loading_rel
    S, W = _loaded_inverse(sigma, loading)
    return Prior(
        manifold=P,
        mu=mu,
        basis=basis,
        sigma=sigma,
        loading=loading,
        precision=S,
        sqrt_precision=W,
        sample_count=l,
        members=members,
        member_ids=list(member_ids) if member_ids is not None else [str(j) for j in range(l)],
        mean_length=mean_length,
    )


def build_prior(
    M: Manifold,
    trajectories: Sequence[Trajectory],
    n: int,
    loading_rel: float = DEFAULT_LOADING_REL,
    settings: SolverSettings = SolverSettings(),
) -> Prior:
    """Fit every trajectory with ``n`` control points and build the prior."""
    if len(trajectories) < 2:
        raise PriorError(f"covariance needs at least 2 trajectories, got {len(trajectories)}")
    members = []
    for y in trajectories:
        try:
            members.append(fit(M, y, n, settings).control)
        except Exception as exc:
            raise PriorError(f"fitting trajectory {y.ident or '?'} failed: {exc}") from exc
    return prior_from_members(
        M,
        members,
        loading_rel,
        settings,
        member_ids=[y.ident for y in trajectories],
        mean_length=float(np.mean([len(y) for y in trajectories])),
    )


def mahalanobis_sq(prior: Prior, x) -> float:
    c = prior.basis.coords(prior.manifold.log(prior.mu, x))
    return float(c @ prior.precision @ c)


def gradient_mahalanobis(prior: Prior, x) -> np.ndarray:
    """Riemannian gradient of :func:`mahalanobis_sq` at ``x``.

    Computed as 2 (d_x Log_mu)^* S Log_mu x.  Since d_x Log_mu inverts
    dExp_mu at Log_mu x, its adjoint is the inverse of the adjoint Jacobi
    map, which the manifold provides in closed form.
    """
    P = prior.manifold
    u = P.log(prior.mu, x)
    su = prior.basis.vector(prior.precision @ prior.basis.coords(u))
    return 2.0 * P.inverse_adjoint_dexp(prior.mu, u, su)


def gradient_mahalanobis_jacobi(prior: Prior, x) -> np.ndarray:
    """2 J(1), J the Jacobi field along Exp_mu(t Log_mu x) with J(0)=0, J'(0)=S Log_mu x.

    Equals :func:`gradient_mahalanobis` in flat space and whenever
    S Log_mu x is radial (parallel to Log_mu x); on curved manifolds the
    component of S Log_mu x orthogonal to Log_mu x picks up the wrong
    Jacobi scaling, so this is not used for optimization.
    """
    P = prior.manifold
    u = P.log(prior.mu, x)
    su = prior.basis.vector(prior.precision @ prior.basis.coords(u))
    return 2.0 * P.dexp(prior.mu, u, su)


def gradient_mahalanobis_alt(prior: Prior, x) -> np.ndarray:
    """-2 (d_x k)^* Log_{k(x)} mu with k(x) = Exp_mu(W Log_mu x).

    d_x k = dExp_mu|_{W u} . W . d_x Log_mu and d_x Log_mu is the inverse of
    dExp_mu|_u, so the adjoint chains three adjoints.  Needs W Log_mu x
    inside the injectivity radius (|.| < pi per sphere component), which a
    stiff precision violates far from mu.
    """
    P = prior.manifold
    B = prior.basis
    W = prior.sqrt_precision
    u = P.log(prior.mu, x)
    wu = B.vector(W @ B.coords(u))
    kx = P.exp(prior.mu, wu)
    z = P.log(kx, prior.mu)
    a = P.adjoint_dexp(prior.mu, wu, z)
    a = B.vector(W.T @ B.coords(a))
    return -2.0 * P.inverse_adjoint_dexp(prior.mu, u, a)


def _fast_mahalanobis(prior: Prior, b, want_grad: bool):
    """(value, gradient) through the compiled/flat path, or None if unavailable."""
    M = prior.base
    if isinstance(M, Sphere) and _kernels is not None:
        val, g, status = _kernels.sphere_mahalanobis(
            prior.mu, prior.flat_basis, prior.precision, np.ascontiguousarray(b, dtype=float), want_grad)
        if status:
            raise DomainError("log at the prior mean reached the cut locus")
        return float(val), g
    if isinstance(M, Euclidean):
        E = prior.flat_basis
        c = E @ (np.asarray(b, dtype=float) - prior.mu).reshape(-1)
        sc = prior.precision @ c
        return float(c @ sc), (2.0 * (E.T @ sc)).reshape(prior.mu.shape)
    return None


def objective_F(prior: Prior, lam: float, b, y: Trajectory) -> float:
    """H(b) + lam * squared Mahalanobis distance of b to the prior."""
    h = objective_H(prior.base, b, y)
    if lam == 0:
        return h
    fast = _fast_mahalanobis(prior, b, False)
    return h + lam * (fast[0] if fast is not None else mahalanobis_sq(prior, b))


def gradient_F(prior: Prior, lam: float, b, y: Trajectory) -> np.ndarray:
    g = gradient_H(prior.base, b, y)
    if lam == 0:
        return g
    fast = _fast_mahalanobis(prior, b, True)
    return g + lam * (fast[1] if fast is not None else gradient_mahalanobis(prior, b))


def minimize_F(
    prior: Prior,
    lam: float,
    y: Trajectory,
    settings: SolverSettings = SolverSettings(),
    start="mu",
    with_r2: bool = True,
) -> FitResult:
    """Minimize the ridge objective by Riemannian steepest descent.

    ``start`` is ``"mu"`` (default), ``"initial_guess"`` or an explicit
    control tuple.  ``with_r2=False`` skips the Frechet-mean computation
    behind ``g_min``/``r_squared`` (left as NaN), which forecasting does not
    need.
    """
    if lam < 0:
        raise ValueError("the ridge parameter must be non-negative")
    M = prior.base
    if isinstance(start, str):
        if start == "mu":
            b0 = prior.mu.copy()
        elif start == "initial_guess":
            if len(y) < 2:
                raise ValueError("initial_guess start needs at least two samples")
            b0 = initial_guess(M, y.samples[0], y.samples[-1], prior.n)
        else:
            raise ValueError(f"unknown start {start!r}")
    else:
        b0 = np.array(start, dtype=float)
    res = run_descent(
        prior.manifold,
        lambda b: objective_F(prior, lam, b, y),
        lambda b: gradient_F(prior, lam, b, y),
        b0,
        settings,
    )
    h = objective_H(M, res.point, y)
    converged = res.converged
    if with_r2:
        mean, mean_ok = mean_for_r2(M, y.samples, settings)
        g = total_variance_G(M, y.samples, mean)
        r2 = r_squared(h, g)
        converged = converged and mean_ok
    else:
        g = r2 = float("nan")
    return FitResult(res.point, h, g, r2, res.iterations, res.grad_norm, converged, res.value)


# ---------------------------------------------------------------------------
# serialization


def dumps_json(v) -> str:
    """JSON text with every float written to 17 significant digits (round-trip exact)."""
    if isinstance(v, bool) or v is None:
        return json.dumps(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return json.dumps(str(v))
        return format(v, ".17g")
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, np.ndarray):
        return dumps_json(v.tolist())
    if isinstance(v, dict):
        inner = ", ".join(f"{json.dumps(str(k))}: {dumps_json(x)}" for k, x in v.items())
        return "{" + inner + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(dumps_json(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def prior_to_dict(prior: Prior) -> dict:
    return {
        "format": "riemridge-prior/1",
        "manifold": prior.manifold.descriptor,
        "n": prior.n,
        "mu": prior.mu,
        "basis": prior.basis.vectors,
        "sigma": prior.sigma,
        "loading": prior.loading,
        "sample_count": prior.sample_count,
        "mean_length": prior.mean_length,
        "member_ids": prior.member_ids,
        "members": [np.asarray(b) for b in prior.members],
    }


def save_prior(prior: Prior, path, extra: Optional[dict] = None) -> None:
    d = prior_to_dict(prior)
    if extra:
        d["config"] = extra
    Path(path).write_text(dumps_json(d) + "\n")


def load_prior(path) -> Prior:
    d = json.loads(Path(path).read_text())
    if d.get("format") != "riemridge-prior/1":
        raise ValueError(f"{path}: not a prior file")
    P = manifold_from_descriptor(d["manifold"])
    mu = np.array(d["mu"], dtype=float)
    basis = ChartBasis(mu, np.array(d["basis"], dtype=float))
    sigma = np.array(d["sigma"], dtype=float)
    loading = float(d["loading"])
    S, W = _loaded_inverse(sigma, loading)
    mean_length = d.get("mean_length", "nan")
    return Prior(
        manifold=P,
        mu=mu,
        basis=basis,
        sigma=sigma,
        loading=loading,
        precision=S,
        sqrt_precision=W,
        sample_count=int(d["sample_count"]),
        members=[np.array(b, dtype=float) for b in d.get("members", [])],
        member_ids=list(d.get("member_ids", [])),
        mean_length=float(mean_length),
    )
