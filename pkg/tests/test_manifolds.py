import numpy as np
import pytest

from riemridge.manifolds import DomainError, Euclidean, PowerManifold, Sphere, manifold_from_descriptor

S2 = Sphere()


def tangent(x, rng, length):
    v = S2.random_tangent(x, rng)
    return v * (length / np.linalg.norm(v))


def random_pair(rng, max_angle=0.9 * np.pi):
    x = S2.random_point(rng)
    return x, S2.exp(x, tangent(x, rng, rng.uniform(0.01, max_angle)))


class TestSphereMaps:
    def test_exp_zero(self):
        np.testing.assert_array_equal(S2.exp([0, 0, 1.0], [0, 0, 0.0]), [0, 0, 1])

    def test_exp_quarter_meridian(self):
        np.testing.assert_allclose(S2.exp([0, 0, 1.0], [np.pi / 2, 0, 0]), [1, 0, 0], atol=1e-15)

    def test_log_orthogonal(self):
        np.testing.assert_allclose(S2.log([1.0, 0, 0], [0, 1.0, 0]), [0, np.pi / 2, 0], atol=1e-15)

    def test_log_same_point(self):
        np.testing.assert_array_equal(S2.log([0, 0, 1.0], [0, 0, 1.0]), [0, 0, 0])

    def test_antipodal_distance(self):
        assert S2.dist([1.0, 0, 0], [-1.0, 0, 0]) == pytest.approx(np.pi)

    def test_cut_locus_rejected(self):
        with pytest.raises(DomainError):
            S2.log([1.0, 0, 0], [-1.0, 0, 0])
        y = np.array([-1.0, 1e-6, 0])
        with pytest.raises(DomainError):
            S2.log([1.0, 0, 0], y / np.linalg.norm(y))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            S2.exp([1.0, 0, 0], [0.0, 1.0])

    def test_round_trip_and_norm(self, rng):
        for _ in range(200):
            x, y = random_pair(rng)
            v = S2.log(x, y)
            np.testing.assert_allclose(S2.exp(x, v), y, atol=1e-10)
            assert np.linalg.norm(v) == pytest.approx(S2.dist(x, y), abs=1e-10)
            assert abs(v @ x) < 1e-10

    def test_exp_distance(self, rng):
        x = S2.random_point(rng)
        for L in (1e-9, 1e-3, 1.0, 3.0):
            v = tangent(x, rng, L)
            y = S2.exp(x, v)
            assert np.linalg.norm(y) == pytest.approx(1.0, abs=1e-12)
            assert S2.dist(x, y) == pytest.approx(L, rel=1e-10)

    def test_small_angle_series(self):
        x = np.array([0, 0, 1.0])
        v = np.array([1e-8, 0, 0])
        np.testing.assert_allclose(S2.log(x, S2.exp(x, v)), v, rtol=1e-7)

    def test_distance_symmetric(self, rng):
        x, y = random_pair(rng)
        assert S2.dist(x, y) == S2.dist(y, x)
        assert S2.dist(x, x) == 0


class TestEuclidean:
    def test_maps(self):
        E2, E3 = Euclidean(2), Euclidean(3)
        np.testing.assert_array_equal(E2.exp([1.0, 2], [3.0, 4]), [4, 6])
        np.testing.assert_array_equal(E3.log([1.0, 1, 1], [2.0, 3, 4]), [1, 2, 3])
        assert E2.inner(None, np.array([1.0, 2]), np.array([3.0, 4])) == 11

    def test_differentials_are_identity(self, rng):
        E = Euclidean(3)
        x, v, w = rng.standard_normal((3, 3))
        np.testing.assert_array_equal(E.dexp(x, v, w), w)
        np.testing.assert_array_equal(E.adjoint_dexp(x, v, w), w)

    def test_basis_is_standard(self):
        np.testing.assert_array_equal(Euclidean(3).basis(np.zeros(3)).vectors, np.eye(3))


def fd_dexp(x, v, w, eps=1e-5):
    y = S2.exp(x, v)
    d = (S2.exp(x, v + eps * w) - S2.exp(x, v - eps * w)) / (2 * eps)
    return S2.proj(y, d)


class TestJacobi:
    def test_dexp_matches_finite_differences(self, rng):
        for _ in range(100):
            x = S2.random_point(rng)
            v = tangent(x, rng, rng.uniform(0.05, 3.0))
            w = S2.random_tangent(x, rng)
            ref = fd_dexp(x, v, w)
            np.testing.assert_allclose(S2.dexp(x, v, w), ref, rtol=0, atol=1e-6 * np.linalg.norm(ref))

    def test_dexp_at_origin(self, rng):
        x = S2.random_point(rng)
        w = S2.random_tangent(x, rng)
        np.testing.assert_allclose(S2.dexp(x, np.zeros(3), w), w)

    def test_orthogonal_part_scaled(self):
        x = np.array([0, 0, 1.0])
        L = 1.2
        v = np.array([L, 0, 0])
        w = np.array([0, 1.0, 0])
        # (0,1,0) is invariant under transport along the x-z meridian
        np.testing.assert_allclose(S2.dexp(x, v, w), np.sin(L) / L * w, atol=1e-15)

    def test_gauss_lemma(self, rng):
        for _ in range(100):
            x = S2.random_point(rng)
            v = tangent(x, rng, rng.uniform(0.05, 3.0))
            w = S2.random_tangent(x, rng)
            lhs = S2.dexp(x, v, v) @ S2.dexp(x, v, w)
            assert lhs == pytest.approx(v @ w, abs=1e-8)

    def test_linearity(self, rng):
        x = S2.random_point(rng)
        v = S2.random_tangent(x, rng)
        w1, w2 = S2.random_tangent(x, rng), S2.random_tangent(x, rng)
        np.testing.assert_allclose(S2.dexp(x, v, 2.5 * w1 + w2),
                                   2.5 * S2.dexp(x, v, w1) + S2.dexp(x, v, w2), atol=1e-10)

    def test_adjoint_identity(self, rng):
        for _ in range(50):
            x = S2.random_point(rng)
            v = tangent(x, rng, rng.uniform(0.05, 3.0))
            y = S2.exp(x, v)
            u = S2.random_tangent(y, rng)
            adj = S2.adjoint_dexp(x, v, u)
            for e in S2.basis(x).vectors:
                assert S2.dexp(x, v, e) @ u == pytest.approx(e @ adj, abs=1e-8)

    def test_inverse_adjoint(self, rng):
        x = S2.random_point(rng)
        v = tangent(x, rng, 2.0)
        a = S2.random_tangent(x, rng)
        np.testing.assert_allclose(S2.adjoint_dexp(x, v, S2.inverse_adjoint_dexp(x, v, a)), a, atol=1e-12)

    def test_cut_locus_domain_error(self):
        with pytest.raises(DomainError):
            S2.dexp(np.array([0, 0, 1.0]), np.array([np.pi, 0, 0]), np.array([0, 1.0, 0]))


class TestBasis:
    def test_north_pole(self):
        b = S2.basis(np.array([0, 0, 1.0]))
        np.testing.assert_array_equal(b.vectors, [[1, 0, 0], [0, 1, 0]])

    def test_orthonormal_and_deterministic(self, rng):
        for _ in range(50):
            x = S2.random_point(rng)
            b = S2.basis(x)
            np.testing.assert_allclose(b.vectors @ b.vectors.T, np.eye(2), atol=1e-12)
            np.testing.assert_allclose(b.vectors @ x, 0, atol=1e-12)
            np.testing.assert_array_equal(S2.basis(x.copy()).vectors, b.vectors)

    def test_coordinates_round_trip(self, rng):
        P = PowerManifold(S2, 3)
        x = P.random_point(rng)
        b = P.basis(x)
        assert b.dim == 6
        c = rng.standard_normal(6)
        np.testing.assert_allclose(b.coords(b.vector(c)), c, atol=1e-14)


class TestPower:
    def test_componentwise(self, rng):
        P = PowerManifold(S2, 4)
        x = P.random_point(rng)
        v = P.random_tangent(x, rng, 0.5)
        y = P.exp(x, v)
        for j in range(4):
            np.testing.assert_array_equal(y[j], S2.exp(x[j], v[j]))
            np.testing.assert_array_equal(P.log(x, y)[j], S2.log(x[j], y[j]))

    def test_product_distance(self, rng):
        P = PowerManifold(S2, 2)
        a, b, c = (S2.random_point(rng) for _ in range(3))
        assert P.dist(np.stack([a, b]), np.stack([a, c])) == pytest.approx(S2.dist(b, c), abs=1e-15)

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            PowerManifold(S2, 3).exp(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_descriptor_round_trip(self):
        for M in (S2, Euclidean(2), PowerManifold(S2, 6), PowerManifold(Euclidean(1), 6)):
            assert manifold_from_descriptor(M.descriptor) == M
