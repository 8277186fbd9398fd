import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riemridge.bezier import de_casteljau, initial_guess
from riemridge.fitting import (
    ConvergenceError,
    LineSearchError,
    SolverSettings,
    Trajectory,
    bernstein_matrix,
    fit,
    frechet_mean,
    gradient_H,
    objective_H,
    r_squared,
    steepest_descent,
    total_variance_G,
)
from riemridge.manifolds import Euclidean, PowerManifold, Sphere

S2 = Sphere()


def noisy_sphere_trajectory(rng, m=15, n=4, noise=0.02):
    c = S2.random_point(rng)
    b = np.stack([S2.exp(c, S2.random_tangent(c, rng, 0.3)) for _ in range(n)])
    t = np.linspace(0, 1, m)
    y = de_casteljau(S2, b, t)
    y = np.stack([S2.exp(p, S2.random_tangent(p, rng, noise)) for p in y])
    return b, Trajectory(t, y)


class TestTrajectory:
    def test_from_raw_normalizes(self):
        y = Trajectory.from_raw([6.0, 12.0, 24.0], np.zeros((3, 1)))
        np.testing.assert_allclose(y.times, [0, 1 / 3, 1])
        np.testing.assert_array_equal(y.raw_times, [6, 12, 24])

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            Trajectory([0.0, 0.5, 0.5], np.zeros((3, 1)))

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            Trajectory([0.0, 1.0], np.zeros((3, 1)))

    def test_prefix(self):
        y = Trajectory.from_raw([0.0, 6.0, 12.0], np.arange(3.0)[:, None])
        p = y.prefix(2)
        assert len(p) == 2
        np.testing.assert_array_equal(p.samples[:, 0], [0, 1])


class TestSettings:
    @pytest.mark.parametrize("kw", [{"max_iters": -1}, {"grad_tol": -1.0}, {"armijo_shrink": 1.0},
                                    {"armijo_slope": 0.0}, {"initial_step": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverSettings(**kw)


class TestObjective:
    def test_exact_geodesic_is_zero(self, rng):
        x, y = S2.random_point(rng), S2.random_point(rng)
        b = np.stack([x, y])
        t = np.linspace(0, 1, 7)
        traj = Trajectory(t, de_casteljau(S2, b, t))
        assert objective_H(S2, b, traj) == pytest.approx(0, abs=1e-28)
        assert np.linalg.norm(gradient_H(S2, b, traj)) < 1e-8

    def test_single_residual(self):
        traj = Trajectory([0.0, 1.0], np.array([[0.0, 0], [1, 1]]))
        assert objective_H(Euclidean(2), np.array([[0.0, 0], [1, 0]]), traj) == 1.0

    def test_resummation_oracle(self, rng):
        b, traj = noisy_sphere_trajectory(rng)
        b = PowerManifold(S2, 4).exp(b, PowerManifold(S2, 4).random_tangent(b, rng, 0.05))
        direct = sum(math.acos(np.clip(y @ de_casteljau(S2, b, t), -1, 1)) ** 2
                     for t, y in zip(traj.times, traj.samples))
        assert objective_H(S2, b, traj) == pytest.approx(direct, rel=1e-9)
        assert objective_H(S2, b, traj, "reference") == pytest.approx(objective_H(S2, b, traj), rel=1e-12)

    def test_euclidean_gradient_is_normal_equations(self, rng):
        b = rng.standard_normal((5, 2))
        t = np.sort(rng.uniform(0, 1, 12))
        traj = Trajectory(t, rng.standard_normal((12, 2)))
        X = bernstein_matrix(t, 5)
        # H = |Xb - y|^2, so its gradient carries the factor 2
        expected = 2 * X.T @ (X @ b - traj.samples)
        for method in ("auto", "analytic", "fd"):
            np.testing.assert_allclose(gradient_H(Euclidean(2), b, traj, method), expected, rtol=1e-6, atol=1e-8)

    def test_gradient_matches_finite_differences(self, rng):
        for k in range(20):
            n = 2 + k % 5
            b, traj = noisy_sphere_trajectory(rng, m=10, n=n, noise=0.05)
            P = PowerManifold(S2, n)
            b = P.exp(b, P.random_tangent(b, rng, 0.1))
            fd = gradient_H(S2, b, traj, "fd")
            for method in ("auto", "analytic"):
                g = gradient_H(S2, b, traj, method)
                assert np.linalg.norm(g - fd) <= 1e-4 * np.linalg.norm(fd)

    def test_unknown_method(self, rng):
        b, traj = noisy_sphere_trajectory(rng)
        with pytest.raises(ValueError):
            gradient_H(S2, b, traj, "magic")


class TestSolver:
    def test_quadratic_bowl(self):
        A = np.array([[3.0, 1.0], [1.0, 2.0]])
        c = np.array([1.0, -2.0])
        res = steepest_descent(Euclidean(2), lambda x: (x - c) @ A @ (x - c), lambda x: 2 * A @ (x - c),
                               np.zeros(2), SolverSettings(grad_tol=1e-10))
        assert res.converged
        np.testing.assert_allclose(res.point, c, atol=1e-8)

    def test_monotone_history(self, rng):
        b, traj = noisy_sphere_trajectory(rng)
        P = PowerManifold(S2, 4)
        res = steepest_descent(P, lambda x: objective_H(S2, x, traj), lambda x: gradient_H(S2, x, traj),
                               initial_guess(S2, traj.samples[0], traj.samples[-1], 4))
        assert np.all(np.diff(res.history) <= 0)

    def test_start_at_minimum(self):
        res = steepest_descent(Euclidean(1), lambda x: float(x @ x), lambda x: 2 * x, np.zeros(1))
        assert res.iterations == 0 and res.converged

    def test_line_search_failure(self):
        # the gradient points the wrong way, so no step decreases the objective
        with pytest.raises(LineSearchError) as info:
            steepest_descent(Euclidean(1), lambda x: float(x @ x), lambda x: -2 * x, np.ones(1))
        assert info.value.iterations == 0

    def test_stalls_at_rounding_floor(self):
        # exact decrease is below the resolution of f; the run must stop, not spin
        res = steepest_descent(Euclidean(1), lambda x: 1e16 + float(x[0]), lambda x: np.ones(1), np.zeros(1),
                               SolverSettings(max_iters=10**6, grad_tol=0.0, initial_step=0.1))
        assert not res.converged and res.iterations < 100

    def test_max_iters_flagged(self, rng):
        b, traj = noisy_sphere_trajectory(rng)
        res = fit(S2, traj, 4, SolverSettings(max_iters=2))
        assert not res.converged and res.iterations == 2


class TestFrechetMean:
    def test_euclidean(self):
        assert frechet_mean(Euclidean(1), np.array([[1.0], [2.0], [6.0]]))[0] == pytest.approx(3, abs=1e-10)

    def test_two_sphere_points(self, rng):
        x, y = S2.random_point(rng), S2.random_point(rng)
        np.testing.assert_allclose(frechet_mean(S2, np.stack([x, y]), SolverSettings(grad_tol=1e-12)),
                                   S2.exp(x, 0.5 * S2.log(x, y)), atol=1e-10)

    def test_identical(self, rng):
        x = S2.random_point(rng)
        np.testing.assert_array_equal(frechet_mean(S2, np.stack([x, x, x])), x)

    def test_first_order_condition(self, rng):
        c = S2.random_point(rng)
        pts = np.stack([S2.exp(c, S2.random_tangent(c, rng, 0.4)) for _ in range(10)])
        mu = frechet_mean(S2, pts)
        assert np.linalg.norm(S2.log(mu, pts).sum(axis=0)) < 1e-6 * len(pts)

    def test_grid_search_oracle(self, rng):
        c = S2.random_point(rng)
        pts = np.stack([S2.exp(c, S2.random_tangent(c, rng, 0.3)) for _ in range(10)])
        mu = frechet_mean(S2, pts)
        lat = np.radians(np.linspace(-90, 90, 721))
        lon = np.radians(np.linspace(-180, 180, 1441))
        LA, LO = np.meshgrid(lat, lon, indexing="ij")
        grid = np.stack([np.cos(LA) * np.cos(LO), np.cos(LA) * np.sin(LO), np.sin(LA)], axis=-1).reshape(-1, 3)
        cost = sum(np.arccos(np.clip(grid @ p, -1, 1)) ** 2 for p in pts)
        best = grid[np.argmin(cost)]
        assert S2.dist(best, mu) < 1e-2
        assert total_variance_G(S2, pts, mu) <= cost.min() + 1e-12

    def test_non_convergence(self, rng):
        pts = np.stack([S2.random_point(rng) for _ in range(5)])
        with pytest.raises(ConvergenceError):
            frechet_mean(S2, pts, SolverSettings(max_iters=1, grad_tol=0.0))

    def test_total_variance(self):
        assert total_variance_G(Euclidean(1), np.array([[0.0], [2.0]]), np.array([1.0])) == 2.0
        x = np.array([0, 0, 1.0])
        assert total_variance_G(S2, np.stack([x, x]), x) == 0.0


class TestFit:
    def test_exact_geodesic(self, rng):
        x, y = S2.random_point(rng), S2.random_point(rng)
        t = np.linspace(0, 1, 9)
        res = fit(S2, Trajectory(t, de_casteljau(S2, np.stack([x, y]), t)), 2)
        assert res.r_squared == pytest.approx(1, abs=1e-6)

    @pytest.mark.parametrize("d,n,tol", [(1, 2, 1e-6), (1, 3, 1e-6), (2, 4, 1e-6), (3, 5, 1e-6), (3, 6, 1e-4)])
    def test_euclidean_least_squares(self, rng, d, n, tol):
        # a value-based line search cannot resolve decreases below rounding of H;
        # on the ill-conditioned degree-5 Bernstein design that floor is ~1e-5
        t = np.sort(np.concatenate([[0, 1], rng.uniform(0, 1, 18)]))
        y = rng.standard_normal((20, d))
        X = bernstein_matrix(t, n)
        expected = np.linalg.lstsq(X, y, rcond=None)[0]
        res = fit(Euclidean(d), Trajectory(t, y), n, SolverSettings(max_iters=20000, grad_tol=1e-10))
        np.testing.assert_allclose(res.control, expected, atol=tol)

    def test_sphere_fit_improves_guess(self, rng):
        b, traj = noisy_sphere_trajectory(rng, n=4)
        res = fit(S2, traj, 4)
        guess = initial_guess(S2, traj.samples[0], traj.samples[-1], 4)
        assert res.h_min <= objective_H(S2, guess, traj)
        assert res.r_squared == pytest.approx(1 - res.h_min / res.g_min)
        assert 0.9 < res.r_squared <= 1

    def test_degenerate_curve_has_zero_r2(self, rng):
        c = S2.random_point(rng)
        pts = np.stack([S2.exp(c, S2.random_tangent(c, rng, 0.3)) for _ in range(8)])
        mu = frechet_mean(S2, pts)
        traj = Trajectory(np.linspace(0, 1, 8), pts)
        h = objective_H(S2, np.stack([mu] * 3), traj)
        assert r_squared(h, total_variance_G(S2, pts, mu)) == pytest.approx(0, abs=1e-12)

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            fit(S2, Trajectory([0.0], np.array([[1.0, 0, 0]])), 2)


class TestRSquared:
    def test_degenerate_policy(self):
        assert r_squared(0.0, 0.0) == 1.0
        assert r_squared(1.0, 0.0) == -math.inf

    @given(st.floats(0, 1e6), st.floats(1e-9, 1e6))
    @settings(max_examples=50)
    def test_bounded_by_one(self, h, g):
        assert r_squared(h, g) <= 1.0
