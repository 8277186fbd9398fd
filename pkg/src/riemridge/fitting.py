"""Least-squares Bezier regression on manifolds and the steepest-descent solver."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bezier import check_control, de_casteljau, de_casteljau_vjp, initial_guess
from .manifolds import DomainError, Euclidean, Manifold, PowerManifold, Sphere

try:
    from . import _kernels
except ImportError:  # pragma: no cover - numba missing
    _kernels = None

log = logging.getLogger(__name__)

STALL_STEPS = 5


@dataclass(frozen=True)
class SolverSettings:
    max_iters: int = 500
    grad_tol: float = 1e-6
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    initial_step: float = 1.0

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if self.grad_tol < 0:
            raise ValueError("grad_tol must be non-negative")
        if not 0 < self.armijo_shrink < 1:
            raise ValueError("armijo_shrink must lie in (0, 1)")
        if not 0 < self.armijo_slope < 1:
            raise ValueError("armijo_slope must lie in (0, 1)")
        if self.initial_step <= 0:
            raise ValueError("initial_step must be positive")


@dataclass
class Trajectory:
    """Time-stamped manifold samples.

    ``times`` are the regression parameters (normalized to [0, 1] by
    :meth:`from_raw`); ``raw_times`` keep the original stamps (e.g. hours).
    A single-sample trajectory is allowed as the prefix of a forecast, but
    fitting needs at least two samples.
    """

    times: np.ndarray
    samples: np.ndarray
    raw_times: Optional[np.ndarray] = None
    ident: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.samples = np.asarray(self.samples, dtype=float)
        if self.raw_times is None:
            self.raw_times = self.times.copy()
        else:
            self.raw_times = np.asarray(self.raw_times, dtype=float)
        if self.times.ndim != 1 or len(self.times) != len(self.samples) or len(self.raw_times) != len(self.times):
            raise ValueError("times, raw_times and samples must have equal length")
        if len(self.times) < 1:
            raise ValueError("trajectory is empty")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @classmethod
    def from_raw(cls, raw_times, samples, ident: str = "") -> "Trajectory":
        """Affinely rescale ``raw_times`` so the first is 0 and the last is 1."""
        raw = np.asarray(raw_times, dtype=float)
        if len(raw) < 2:
            raise ValueError("at least two samples are needed to normalize times")
        times = (raw - raw[0]) / (raw[-1] - raw[0])
        times[-1] = 1.0
        return cls(times, samples, raw, ident)

    def __len__(self):
        return len(self.times)

    def prefix(self, k: int) -> "Trajectory":
        """The first ``k`` samples (same time parametrization)."""
        if not 1 <= k <= len(self):
            raise ValueError(f"prefix length {k} out of range for {len(self)} samples")
        return Trajectory(self.times[:k], self.samples[:k], self.raw_times[:k], self.ident)


@dataclass
class FitResult:
    control: np.ndarray
    h_min: float
    g_min: float
    r_squared: float
    iterations: int
    grad_norm: float
    converged: bool = True
    value: float = float("nan")  # objective actually minimized (H or F)


@dataclass
class DescentResult:
    point: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


class LineSearchError(RuntimeError):
    """Armijo backtracking could not find an acceptable step."""

    def __init__(self, msg, point, value, grad_norm, iterations):
        super().__init__(f"{msg} (iteration {iterations}, f={value:.6g}, |grad|={grad_norm:.3g})")
        self.point = point
        self.value = value
        self.grad_norm = grad_norm
        self.iterations = iterations


class ConvergenceError(RuntimeError):
    def __init__(self, msg, point, grad_norm):
        super().__init__(f"{msg} (|grad|={grad_norm:.3g})")
        self.point = point
        self.grad_norm = grad_norm


def steepest_descent(
    M: Manifold,
    objective: Callable,
    gradient: Callable,
    start,
    settings: SolverSettings = SolverSettings(),
) -> DescentResult:
    """Riemannian steepest descent with Armijo backtracking.

    Each update is ``exp_x(-s grad f(x))``.  The first trial step is
    ``settings.initial_step``; later trial steps use the Barzilai-Borwein
    quotient of the previous update (tangent vectors compared after
    projection onto the current tangent space), and backtracking enforces
    the Armijo condition so accepted values never increase.  The run also
    stops (unconverged) once several accepted steps in a row leave the
    value unchanged, which happens when the decrease falls below rounding.
    """
    x = np.array(start, dtype=float)
    f = float(objective(x))
    g = gradient(x)
    gn2 = float(M.inner(x, g, g))
    history = [f]
    trial = settings.initial_step
    it = 0
    flat = 0
    while True:
        gnorm = math.sqrt(max(gn2, 0.0))
        if gnorm <= settings.grad_tol:
            return DescentResult(x, f, gnorm, it, True, history)
        if it >= settings.max_iters:
            return DescentResult(x, f, gnorm, it, False, history)
        s = trial
        while True:
            x_new = M.exp(x, -s * g)
            try:
                f_new = float(objective(x_new))
            except ValueError:
                f_new = math.inf
            if f_new <= f - settings.armijo_slope * s * gn2:
                break
            s *= settings.armijo_shrink
            if s < 1e-16 * max(1.0, trial):
                raise LineSearchError("step size underflow in Armijo backtracking", x, f, gnorm, it)
        g_new = gradient(x_new)
        step = M.proj(x_new, -s * g)
        dg = g_new - M.proj(x_new, g)
        sy = float(M.inner(x_new, step, dg))
        ss = float(M.inner(x_new, step, step))
        trial = min(max(ss / sy, 1e-10), 1e10) if sy > 0 else settings.initial_step
        if f_new > f:
            raise AssertionError("accepted step increased the objective")
        flat = flat + 1 if f_new == f else 0
        x, f, g = x_new, f_new, g_new
        gn2 = float(M.inner(x, g, g))
        history.append(f)
        it += 1
        if flat >= STALL_STEPS:
            return DescentResult(x, f, math.sqrt(max(gn2, 0.0)), it, False, history)


def _kernel_for(M: Manifold):
    if _kernels is None:
        return None
    if isinstance(M, Sphere):
        return "sphere"
    if isinstance(M, Euclidean):
        return "flat"
    return None


def objective_H(M: Manifold, b, y: Trajectory, method: str = "auto") -> float:
    """Sum of squared distances between samples and the curve at their times.

    ``method="reference"`` evaluates through :func:`de_casteljau`; ``"auto"``
    uses the compiled loop for the sphere and flat spaces (same formulas).
    """
    kind = _kernel_for(M) if method == "auto" else None
    if kind == "sphere":
        h, status = _kernels.sphere_h(np.ascontiguousarray(b, dtype=float), y.times, y.samples)
        if status:
            raise DomainError("de Casteljau evaluation reached the cut locus")
        return float(h)
    if kind == "flat":
        return float(_kernels.flat_h(np.ascontiguousarray(b, dtype=float), y.times, y.samples))
    p = de_casteljau(M, b, y.times)
    return float(np.sum(M.dist(y.samples, p) ** 2))


def _fd_gradient(P: Manifold, fun, x, h=1e-6):
    basis = P.basis(x)
    c = np.empty(basis.dim)
    for k, e in enumerate(basis.vectors):
        c[k] = (fun(P.exp(x, h * e)) - fun(P.exp(x, -h * e))) / (2 * h)
    return basis.vector(c)


def gradient_H(M: Manifold, b, y: Trajectory, method: str = "auto") -> np.ndarray:
    """Riemannian gradient of :func:`objective_H` at ``b`` in M^n.

    ``"analytic"`` back-propagates through the de Casteljau ladder with the
    manifold's geodesic pull-back (numpy); ``"fd"`` takes central
    differences in the orthonormal chart at ``b``; ``"auto"`` runs the
    compiled version of the analytic pass when one exists for ``M``.
    """
    b = check_control(M, b)
    if method == "auto":
        kind = _kernel_for(M)
        if kind == "sphere":
            _, g, status = _kernels.sphere_h_grad(np.ascontiguousarray(b), y.times, y.samples)
            if status:
                raise DomainError("de Casteljau evaluation reached the cut locus")
            return g
        if kind == "flat":
            return _kernels.flat_h_grad(np.ascontiguousarray(b), y.times, y.samples)[1]
        method = "analytic" if hasattr(M, "geodesic_vjp") else "fd"
    if method == "fd":
        P = PowerManifold(M, b.shape[0])
        return _fd_gradient(P, lambda c: objective_H(M, c, y, "reference"), b)
    if method != "analytic":
        raise ValueError(f"unknown gradient method {method!r}")
    p = de_casteljau(M, b, y.times)
    # grad of dist^2(y_i, .) at p_i is -2 log_{p_i} y_i
    pbar = -2.0 * M.log(p, y.samples)
    return de_casteljau_vjp(M, b, y.times, pbar)


def total_variance_G(M: Manifold, points, mean) -> float:
    points = np.asarray(points, dtype=float)
    return float(np.sum(M.dist(points, mean) ** 2))


def frechet_mean(M: Manifold, points, settings: SolverSettings = SolverSettings()) -> np.ndarray:
    """Minimizer of the sum of squared distances to ``points``.

    Raises
    ------
    ConvergenceError
        If the gradient norm is still above ``settings.grad_tol`` after
        ``settings.max_iters`` iterations; carries the last iterate.
    """
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        raise ValueError("Frechet mean of an empty set")
    if np.all(points == points[0]):
        return points[0].copy()

    def grad(x):
        return -2.0 * np.sum(M.log(x, points), axis=0)

    res = steepest_descent(M, lambda x: total_variance_G(M, points, x), grad, points[0], settings)
    if not res.converged:
        raise ConvergenceError("Frechet mean did not converge", res.point, res.grad_norm)
    return res.point


def r_squared(h_min: float, g_min: float) -> float:
    """1 - H_min / G_min; 1 for a perfect fit of constant data, -inf when undefined."""
    if g_min > 0:
        return 1.0 - h_min / g_min
    return 1.0 if h_min == 0 else -math.inf


def mean_for_r2(M: Manifold, points, settings) -> tuple:
    """Frechet mean for R^2; on non-convergence the last iterate is used and flagged."""
    try:
        return frechet_mean(M, points, settings), True
    except ConvergenceError as exc:
        log.debug("%s; using the last iterate", exc)
        return exc.point, False


def run_descent(M: Manifold, objective, gradient, start, settings) -> DescentResult:
    """steepest_descent that turns a line-search failure into a flagged result."""
    try:
        return steepest_descent(M, objective, gradient, start, settings)
    except LineSearchError as exc:
        log.debug("line search stopped early: %s", exc)
        return DescentResult(exc.point, exc.value, exc.grad_norm, exc.iterations, False)


def fit(M: Manifold, y: Trajectory, n: int, settings: SolverSettings = SolverSettings(),
        gradient_method: str = "auto") -> FitResult:
    """Best-fitting Bezier polynomial with ``n`` control points.

    Starts from the geodesic initial guess; non-convergence is reported via
    ``FitResult.converged`` rather than raised.
    """
    if len(y) < 2:
        raise ValueError("fitting needs at least two samples")
    b0 = initial_guess(M, y.samples[0], y.samples[-1], n)
    P = PowerManifold(M, n)
    res = run_descent(
        P,
        lambda b: objective_H(M, b, y),
        lambda b: gradient_H(M, b, y, gradient_method),
        b0,
        settings,
    )
    mean, mean_ok = mean_for_r2(M, y.samples, settings)
    g_min = total_variance_G(M, y.samples, mean)
    return FitResult(
        control=res.point,
        h_min=res.value,
        g_min=g_min,
        r_squared=r_squared(res.value, g_min),
        iterations=res.iterations,
        grad_norm=res.grad_norm,
        converged=res.converged and mean_ok,
        value=res.value,
    )


def bernstein_matrix(times: Sequence[float], n: int) -> np.ndarray:
    """Design matrix X with X[i, k] = C(n-1, k) t_i^k (1 - t_i)^(n-1-k)."""
    t = np.asarray(times, dtype=float)[:, None]
    k = np.arange(n)[None, :]
    coef = np.array([math.comb(n - 1, j) for j in range(n)], dtype=float)[None, :]
    return coef * t**k * (1 - t) ** (n - 1 - k)
