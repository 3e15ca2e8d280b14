import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gplstm.gp import NonPSDKernelError, cholesky_jitter, gp_posterior, nlml_and_grad
from gplstm.kernels import RbfHyperparams, kernel_matrix


def dense_posterior(k_train, k_cross, k_diag, y, noise):
    a_inv = np.linalg.inv(k_train + noise * np.eye(len(y)))
    mean = k_cross @ a_inv @ y
    var = k_diag - np.einsum("ij,jk,ik->i", k_cross, a_inv, k_cross)
    return mean, var


def random_instance(rng, n, m=3, d=2):
    hp = RbfHyperparams.from_values(rng.uniform(0.5, 2), rng.uniform(0.5, 2), rng.uniform(0.05, 0.5))
    x = rng.normal(size=(n, d))
    xs = rng.normal(size=(m, d))
    return hp, kernel_matrix(x, x, hp), kernel_matrix(xs, x, hp), np.full(m, hp.signal_var), rng.normal(size=n)


class TestPosterior:
    def test_noise_free_interpolation(self):
        post = gp_posterior([[1.0]], [[1.0]], [1.0], [2.0])
        assert post.mean[0] == pytest.approx(2.0)
        assert post.variance[0] == pytest.approx(0.0, abs=1e-12)

    def test_empty_training_set_is_prior(self):
        post = gp_posterior(np.zeros((0, 0)), np.zeros((1, 0)), [1.0], [])
        assert post.mean.tolist() == [0.0]
        assert post.variance.tolist() == [1.0]

    def test_matches_dense_inverse_1d(self):
        rng = np.random.default_rng(3)
        hp = RbfHyperparams.from_values(1.0, 1.0, 0.1)
        x = rng.normal(size=(5, 1))
        xs = rng.normal(size=(4, 1))
        kt, kc = kernel_matrix(x, x, hp), kernel_matrix(xs, x, hp)
        y = rng.normal(size=5)
        post = gp_posterior(kt, kc, np.ones(4), y, noise_var=0.1)
        mean, var = dense_posterior(kt, kc, np.ones(4), y, 0.1)
        np.testing.assert_allclose(post.mean, mean, atol=1e-8)
        np.testing.assert_allclose(post.variance, var, atol=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 10), st.integers(0, 2**32 - 1))
    def test_variance_bounded_by_prior(self, n, seed):
        hp, kt, kc, kd, y = random_instance(np.random.default_rng(seed), n)
        post = gp_posterior(kt, kc, kd, y, noise_var=hp.noise_var)
        assert np.all(post.variance >= 0)
        assert np.all(post.variance <= kd + 1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 9), st.integers(0, 2**32 - 1))
    def test_extra_point_shrinks_variance(self, n, seed):
        rng = np.random.default_rng(seed)
        hp = RbfHyperparams.from_values(1.0, 1.0, 0.1)
        x, xs = rng.normal(size=(n + 1, 2)), rng.normal(size=(4, 2))
        y = rng.normal(size=n + 1)
        var = [gp_posterior(kernel_matrix(x[:k], x[:k], hp), kernel_matrix(xs, x[:k], hp), np.ones(4),
                            y[:k], hp.noise_var).variance for k in (n, n + 1)]
        assert np.all(var[1] <= var[0] + 1e-12)

    def test_noise_free_reproduces_labels(self):
        rng = np.random.default_rng(5)
        hp = RbfHyperparams.from_values(1.0, 1.0, 0.1)  # noise enters only via noise_var below
        x = rng.normal(size=(6, 2))
        y = rng.normal(size=6)
        k = kernel_matrix(x, x, hp)
        post = gp_posterior(k, k[:3], np.ones(3), y)
        np.testing.assert_allclose(post.mean, y[:3], atol=1e-8)
        assert np.all(post.variance <= 1e-8)

    def test_precomputed_factor(self):
        rng = np.random.default_rng(0)
        hp, kt, kc, kd, y = random_instance(rng, 6)
        f = cholesky_jitter(kt + hp.noise_var * np.eye(6))
        a = gp_posterior(kt, kc, kd, y, hp.noise_var)
        b = gp_posterior(None, kc, kd, y, factor=f)
        np.testing.assert_array_equal(a.mean, b.mean)

    def test_negative_noise_rejected(self):
        with pytest.raises(ValueError):
            gp_posterior(np.eye(2), np.zeros((1, 2)), [1.0], [0.0, 1.0], noise_var=-1.0)


class TestCholeskyJitter:
    def test_exact_when_pd(self):
        f = cholesky_jitter(np.eye(3) * 2)
        assert f.jitter == 0.0
        assert f.log_det == pytest.approx(3 * math.log(2))

    def test_singular_gets_jitter(self):
        f = cholesky_jitter(np.ones((4, 4)))
        assert f.jitter > 0
        assert np.all(np.isfinite(f.lower))

    def test_indefinite_raises(self):
        with pytest.raises(NonPSDKernelError, match="non-PSD"):
            cholesky_jitter(np.diag([1.0, -1.0]))

    def test_inverse_matches_numpy(self):
        rng = np.random.default_rng(1)
        b = rng.normal(size=(5, 5))
        a = b @ b.T + np.eye(5)
        np.testing.assert_allclose(cholesky_jitter(a).inverse(), np.linalg.inv(a), atol=1e-10)


class TestNlml:
    def test_scalar_cases(self):
        assert nlml_and_grad([[1.0]], [0.0])[0] == pytest.approx(0.5 * math.log(2 * math.pi))
        assert nlml_and_grad([[1.0]], [1.0])[0] == pytest.approx(0.5 * (1 + math.log(2 * math.pi)))

    def test_matches_gaussian_logpdf(self):
        from scipy.stats import multivariate_normal

        rng = np.random.default_rng(2)
        b = rng.normal(size=(6, 6))
        a = b @ b.T + 0.5 * np.eye(6)
        y = rng.normal(size=6)
        nlml, _ = nlml_and_grad(a, y)
        assert nlml == pytest.approx(-multivariate_normal(np.zeros(6), a).logpdf(y), rel=1e-10)

    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(4)
        b = rng.normal(size=(6, 6))
        a = b @ b.T + np.eye(6)
        y = rng.normal(size=6)
        _, g = nlml_and_grad(a, y)
        # symmetric perturbations: d/dt NLML(A + t(E_ij + E_ji)) = G_ij + G_ji
        h = 1e-5
        for i in range(6):
            for j in range(i + 1):
                e = np.zeros_like(a)
                e[i, j] = e[j, i] = h
                fd = (nlml_and_grad(a + e, y)[0] - nlml_and_grad(a - e, y)[0]) / (2 * h)
                expect = g[i, i] if i == j else g[i, j] + g[j, i]
                assert expect == pytest.approx(fd, rel=1e-5, abs=1e-9)
        np.testing.assert_allclose(g, g.T, atol=1e-14)

    def test_noise_on_diagonal(self):
        a = np.array([[1.0, 0.3], [0.3, 1.0]])
        y = np.array([0.2, -0.1])
        assert nlml_and_grad(a, y, 0.4)[0] == pytest.approx(nlml_and_grad(a + 0.4 * np.eye(2), y)[0])
