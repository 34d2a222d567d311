import numpy as np
import pytest

from hetrvm.numerics import (FactorizationError, chol_factor, gauss_hermite,
                             gauss_kl, grad_check, lognormal_mean,
                             psd_solve_logdet)


class TestPsdSolve:
    def test_identity(self):
        x, ld = psd_solve_logdet(np.eye(3), np.arange(3.0))
        np.testing.assert_allclose(x, [0.0, 1.0, 2.0], atol=1e-15)
        assert ld == 0.0

    def test_diagonal_logdet(self):
        A = np.diag([2.0, 5.0])
        x, ld = psd_solve_logdet(A, np.array([4.0, 10.0]))
        np.testing.assert_allclose(x, [2.0, 2.0], atol=1e-14)
        assert ld == pytest.approx(np.log(10.0), abs=1e-12)

    def test_random_spd(self):
        rng = np.random.default_rng(0)
        M = rng.normal(size=(6, 6))
        A = M @ M.T + 6 * np.eye(6)
        b = rng.normal(size=6)
        x, ld = psd_solve_logdet(A, b)
        np.testing.assert_allclose(A @ x, b, atol=1e-10)
        assert ld == pytest.approx(np.linalg.slogdet(A)[1], rel=1e-12)

    def test_non_pd_raises_with_pivot(self):
        A = np.diag([1.0, -1.0, 2.0])
        with pytest.raises(FactorizationError) as exc:
            psd_solve_logdet(A, np.zeros(3))
        assert exc.value.pivot == 2

    def test_asymmetric_rejected(self):
        A = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ValueError):
            psd_solve_logdet(A, np.zeros(2))

    def test_near_singular_still_factors(self):
        A = np.diag([1.0, 1e-13])
        x, _ = psd_solve_logdet(A, np.array([1.0, 1e-13]))
        np.testing.assert_allclose(x, [1.0, 1.0], rtol=1e-6)


class TestGaussKl:
    def test_equal_is_zero(self):
        Sigma = np.array([[2.0, 0.3], [0.3, 1.0]])
        mu = np.array([0.1, -0.2])
        assert gauss_kl(mu, Sigma, mu, Sigma) == 0.0

    def test_univariate_closed_form(self):
        # KL(N(1, 2) || N(0, 1)) = (2 + 1 - 1 - log 2) / 2
        got = gauss_kl([1.0], [[2.0]], [0.0], [[1.0]])
        assert got == pytest.approx(0.5 * (2.0 + 1.0 - 1.0 - np.log(2.0)),
                                    abs=1e-12)

    def test_mean_shift_identity_covs(self):
        d = np.array([1.0, 2.0, 3.0])
        got = gauss_kl(d, np.eye(3), np.zeros(3), np.eye(3))
        assert got == pytest.approx(0.5 * float(d @ d), abs=1e-12)

    def test_nonnegative_random(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            A = rng.normal(size=(4, 4))
            B = rng.normal(size=(4, 4))
            assert gauss_kl(rng.normal(size=4), A @ A.T + np.eye(4),
                            rng.normal(size=4), B @ B.T + np.eye(4)) >= 0.0

    def test_singular_input_raises(self):
        with pytest.raises((FactorizationError, ValueError)):
            gauss_kl([0.0, 0.0], np.zeros((2, 2)), [0.0, 0.0], np.eye(2))


class TestGaussHermite:
    def test_moments_order_10(self):
        q = gauss_hermite(10)
        assert float(q.weights.sum()) == pytest.approx(1.0, abs=1e-12)
        assert float(q.weights @ q.nodes) == pytest.approx(0.0, abs=1e-12)
        assert float(q.weights @ q.nodes**2) == pytest.approx(1.0, abs=1e-12)
        assert float(q.weights @ q.nodes**4) == pytest.approx(3.0, abs=1e-10)

    def test_lognormal_integral(self):
        # E[exp(Z)] = exp(1/2); order 20 is accurate to ~1e-9
        q = gauss_hermite(20)
        got = float(q.weights @ np.exp(q.nodes))
        assert got == pytest.approx(np.exp(0.5), abs=1e-8)

    def test_polynomial_exactness(self):
        q = gauss_hermite(3)  # exact through degree 5
        assert float(q.weights @ q.nodes**4) == pytest.approx(3.0, abs=1e-10)

    def test_order_bounds(self):
        with pytest.raises(ValueError):
            gauss_hermite(0)
        with pytest.raises(ValueError):
            gauss_hermite(129)
        gauss_hermite(1)
        gauss_hermite(128)


class TestLognormalMean:
    def test_scalar(self):
        assert lognormal_mean(0.0, 1.0) == pytest.approx(np.exp(0.5))

    def test_zero_variance(self):
        assert lognormal_mean(2.0, 0.0) == pytest.approx(np.exp(2.0))

    def test_vectorized(self):
        out = lognormal_mean(np.array([0.0, 1.0]), np.array([0.0, 2.0]))
        np.testing.assert_allclose(out, [1.0, np.exp(2.0)], rtol=1e-12)

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError):
            lognormal_mean(0.0, -0.1)


class TestGradCheck:
    def test_quadratic_passes(self):
        A = np.array([[3.0, 1.0], [1.0, 2.0]])
        f = lambda x: 0.5 * x @ A @ x
        g = lambda x: A @ x
        assert grad_check(f, g, np.array([0.7, -1.3])) < 1e-8

    def test_wrong_gradient_detected(self):
        f = lambda x: float(np.sum(x**2))
        g = lambda x: 3.0 * x  # wrong scale
        assert grad_check(f, g, np.array([1.0, 2.0])) > 1e-2

    def test_nonfinite_objective_raises(self):
        f = lambda x: np.inf
        g = lambda x: np.zeros_like(x)
        with pytest.raises(ValueError):
            grad_check(f, g, np.array([0.0]))


def test_chol_factor_matches_numpy():
    rng = np.random.default_rng(2)
    M = rng.normal(size=(5, 5))
    A = M @ M.T + 5 * np.eye(5)
    np.testing.assert_allclose(chol_factor(A), np.linalg.cholesky(A),
                               atol=1e-10)
