import numpy as np
import pytest

from dircov.estimators import sample_covariance
from dircov.matops import spectral_norm
from dircov.randgen import (
    RngStream,
    haar_orthogonal,
    make_sigma_custom,
    make_sigma_identity,
    make_sigma_setting1,
    make_sigma_setting2,
    random_orthoprojector,
    sample_ball_uniform,
    sample_gaussian,
)


class TestSetting1:
    def test_nu_one_gives_identity(self):
        model = make_sigma_setting1(1.0, RngStream(0, 0))
        np.testing.assert_allclose(model.matrix.entries, np.eye(10), atol=1e-12)

    def test_condition_number_at_tiny_nu(self):
        model = make_sigma_setting1(1e-9, RngStream(4, 2))
        lam = model.matrix.eigen().eigenvalues
        cond = lam[0] / lam[-1]
        assert abs(cond - 1e9) / 1e9 <= 1e-4

    def test_trace_invariance(self):
        # oracle: trace is invariant under orthogonal conjugation, so 5 + 5*nu
        for k, nu in enumerate([1.0, 0.3, 1e-4]):
            model = make_sigma_setting1(nu, RngStream(9, k))
            assert abs(np.trace(model.matrix.entries) - (5 + 5 * nu)) <= 1e-10

    def test_eigenvalue_multiset(self):
        for k in range(50):
            nu = 0.25
            lam = make_sigma_setting1(nu, RngStream(1, k)).matrix.eigen().eigenvalues
            expected = np.concatenate([np.ones(5), np.full(5, nu)])
            np.testing.assert_allclose(lam, expected, atol=1e-9)

    def test_nu_out_of_range(self):
        for bad in (0.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                make_sigma_setting1(bad, RngStream(0))


class TestSetting2:
    def test_exact_formula_d3(self):
        model = make_sigma_setting2(0.5, 3)
        expected = [[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]]
        np.testing.assert_array_equal(model.matrix.entries, expected)

    def test_unit_diagonal(self):
        for nu in (0.5, 0.9):
            model = make_sigma_setting2(nu, 7)
            np.testing.assert_array_equal(np.diag(model.matrix.entries), np.ones(7))

    def test_positive_definite(self):
        lam = make_sigma_setting2(0.9, 10).matrix.eigen().eigenvalues
        assert lam[-1] > 0

    def test_nu_out_of_range(self):
        for bad in (0.0, 1.0, -0.2):
            with pytest.raises(ValueError):
                make_sigma_setting2(bad, 5)


class TestSampleGaussian:
    def test_zero_covariance_degenerates(self):
        model = make_sigma_custom(np.zeros((4, 4)))
        data = sample_gaussian(model, 6, RngStream(3))
        np.testing.assert_array_equal(data.x, np.zeros((6, 4)))

    def test_identity_covariance_concentrates(self):
        model = make_sigma_identity(5)
        data = sample_gaussian(model, 100_000, RngStream(12))
        err = spectral_norm(sample_covariance(data).entries - np.eye(5))
        assert err <= 0.1

    def test_determinism(self):
        model = make_sigma_setting2(0.6, 4)
        a = sample_gaussian(model, 50, RngStream(8, 1))
        b = sample_gaussian(model, 50, RngStream(8, 1))
        assert np.array_equal(a.x, b.x)

    def test_distinct_streams_differ(self):
        model = make_sigma_identity(3)
        a = sample_gaussian(model, 10, RngStream(8, 1))
        b = sample_gaussian(model, 10, RngStream(8, 2))
        assert not np.array_equal(a.x, b.x)


class TestBallUniform:
    def test_support(self):
        data = sample_ball_uniform(4, 2000, RngStream(5))
        assert np.linalg.norm(data.x, axis=1).max() <= 1.0

    def test_mean_in_dim_one(self):
        data = sample_ball_uniform(1, 50_000, RngStream(6))
        assert abs(data.x.mean()) <= 0.02

    def test_mean_squared_radius_dim_two(self):
        # oracle: E r^2 = D / (D + 2) = 1/2 for D = 2
        data = sample_ball_uniform(2, 50_000, RngStream(7))
        r2 = np.sum(data.x**2, axis=1).mean()
        assert abs(r2 - 0.5) <= 0.02

    def test_determinism(self):
        a = sample_ball_uniform(3, 100, RngStream(9, 4))
        b = sample_ball_uniform(3, 100, RngStream(9, 4))
        assert np.array_equal(a.x, b.x)


class TestRandomOrthoprojector:
    def test_full_rank_is_identity(self):
        p = random_orthoprojector(6, 6, RngStream(2))
        np.testing.assert_allclose(p.matrix, np.eye(6), atol=1e-10)

    def test_trace_equals_rank(self):
        p = random_orthoprojector(10, 3, RngStream(3))
        assert abs(np.trace(p.matrix) - 3) <= 1e-8

    def test_idempotent(self):
        p = random_orthoprojector(10, 3, RngStream(4))
        assert np.max(np.abs(p.matrix @ p.matrix - p.matrix)) <= 1e-10

    def test_rank_validation(self):
        for bad in (0, 11):
            with pytest.raises(ValueError):
                random_orthoprojector(10, bad, RngStream(0))


class TestHaar:
    def test_orthogonality(self):
        u = haar_orthogonal(6, RngStream(10))
        np.testing.assert_allclose(u @ u.T, np.eye(6), atol=1e-12)

    def test_first_column_uniform_on_sphere(self):
        # first-column coordinate second moment is 1/D for Haar
        vals = [haar_orthogonal(4, RngStream(11, k))[0, 0] ** 2 for k in range(1000)]
        assert abs(np.mean(vals) - 0.25) <= 0.02

    def test_reproducible(self):
        a = haar_orthogonal(5, RngStream(1, 2))
        b = haar_orthogonal(5, RngStream(1, 2))
        assert np.array_equal(a, b)
