import math

import numpy as np
import pytest
from scipy import special

from oracles import ReferenceGP, central_diff, central_diff2
from rsens.errors import DataError, FitError
from rsens.gp import (
    AdditiveEQKernel,
    EQKernelParams,
    gp_fit,
    gp_latent_predict,
    gp_predict_dist,
    gp_predictive,
    jittered_cholesky,
    kernel_eval,
    kernel_grad,
    kernel_hess,
    latent_moments,
    log_marginal_likelihood,
    log_predictive_density,
    predictive_params,
)
from rsens.predictive import Bernoulli, Gaussian, Poisson
from rsens.sensitivity import kl_finite_difference, rsens_local


def random_kernel(rng, D):
    return EQKernelParams(rng.uniform(0.5, 2.0), tuple(rng.uniform(0.5, 2.0, size=D)))


def rel_err(a, b, scale):
    """|a - b| relative to max(|b|, scale); ``scale`` guards values near zero."""
    return np.abs(np.asarray(a) - np.asarray(b)) / np.maximum(np.abs(b), scale)


@pytest.fixture(scope="module")
def gaussian_data():
    rng = np.random.default_rng(11)
    X = rng.uniform(-2, 2, size=(30, 2))
    y = np.sin(2 * X[:, 0]) * X[:, 1] + 0.1 * rng.normal(size=30)
    return X, y


@pytest.fixture(scope="module")
def probit_model():
    rng = np.random.default_rng(5)
    X = rng.uniform(-2, 2, size=(40, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] ** 2 + 0.3 * rng.normal(size=40) > 0.5).astype(float)
    return gp_fit(X, y, likelihood="probit", kernel=EQKernelParams(2.0, (1.0, 1.2)), optimize_hypers=False)


@pytest.fixture(scope="module")
def poisson_model():
    rng = np.random.default_rng(6)
    X = rng.uniform(-3, 3, size=(40, 2))
    y = rng.poisson(np.exp(np.sin(X[:, 0]) + 0.3 * X[:, 1])).astype(float)
    return gp_fit(X, y, likelihood="poisson", kernel=EQKernelParams(1.0, (1.5, 2.0)), optimize_hypers=False)


class TestKernel:
    def test_coincident(self):
        k = EQKernelParams(2.5, (0.7, 1.3))
        assert kernel_eval(k, [0.3, -1.0], [0.3, -1.0]) == 2.5
        assert kernel_grad(k, [0.3, -1.0], [0.3, -1.0], 0) == 0.0

    def test_hand_value(self):
        k = EQKernelParams(1.0, (1.0,))
        assert kernel_eval(k, [math.sqrt(2)], [0.0]) == pytest.approx(math.exp(-1), rel=1e-14)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            k = random_kernel(rng, 3)
            a, b = rng.normal(size=(2, 3))
            assert kernel_eval(k, a, b) == kernel_eval(k, b, a)

    def test_invalid(self):
        with pytest.raises(DataError):
            EQKernelParams(0.0, (1.0,))
        with pytest.raises(DataError):
            EQKernelParams(1.0, (1.0, -2.0))

    def test_grad_finite_difference(self):
        rng = np.random.default_rng(1)
        h = 1e-5
        for _ in range(100):
            D = int(rng.integers(1, 4))
            k = random_kernel(rng, D)
            xi, xj = rng.normal(size=(2, D))
            d = int(rng.integers(D))
            e = np.eye(D)[d] * h
            fd = (kernel_eval(k, xi + e, xj) - kernel_eval(k, xi - e, xj)) / (2 * h)
            assert rel_err(kernel_grad(k, xi, xj, d), fd, 1e-3 * k.signal_var) < 1e-6

    def test_hess_finite_difference(self):
        rng = np.random.default_rng(2)
        h = 1e-4
        for i in range(100):
            D = int(rng.integers(1, 4))
            k = random_kernel(rng, D)
            xi, xj = rng.normal(size=(2, D))
            d = int(rng.integers(D))
            e = d if i % 3 == 0 else int(rng.integers(D))
            ed, ee = np.eye(D)[d] * h, np.eye(D)[e] * h
            f = lambda z: kernel_eval(k, z, xj)
            fd = (f(xi + ed + ee) - f(xi + ed - ee) - f(xi - ed + ee) + f(xi - ed - ee)) / (4 * h * h)
            assert rel_err(kernel_hess(k, xi, xj, d, e), fd, 1e-2 * k.signal_var) < 1e-4

    def test_hess_diagonal_term(self):
        # at coincidence only the -delta_de / l_d^2 term survives
        k = EQKernelParams(1.5, (0.5, 2.0))
        assert kernel_hess(k, [0, 0], [0, 0], 0, 0) == pytest.approx(-1.5 / 0.25)
        assert kernel_hess(k, [0, 0], [0, 0], 0, 1) == 0.0

    def test_additive_matches_sum(self):
        rng = np.random.default_rng(3)
        kern = AdditiveEQKernel.build(3, [(0,), (1,), (2,), (0, 2)], signal_var=0.7, lengthscale=1.3)
        A, B = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
        ref = sum(
            EQKernelParams(0.7, (1.3,) * len(g)).matrix(A[:, list(g)], B[:, list(g)])
            for g in [(0,), (1,), (2,), (0, 2)]
        )
        np.testing.assert_allclose(kern.matrix(A, B), ref, rtol=1e-14)
        x = rng.normal(size=3)
        k, G, H = kern.derivatives(x, B, order=2)
        for d in range(3):
            fd = central_diff(lambda z: kern.matrix(z[None, :], B)[0], x, d, 1e-3)
            np.testing.assert_allclose(G[:, d], fd, atol=1e-9)
            for e in range(3):
                fd2 = central_diff2(lambda z: kern.matrix(z[None, :], B)[0], x, d, e, 1e-3)
                np.testing.assert_allclose(H[:, d, e], fd2, atol=1e-7)


class TestCholesky:
    def test_adds_jitter_to_singular(self):
        v = np.ones((3, 1))
        L, jitter = jittered_cholesky(v @ v.T)
        assert jitter > 0
        np.testing.assert_allclose(L @ L.T, v @ v.T + jitter * np.eye(3), atol=1e-12)

    def test_indefinite_fails(self):
        with pytest.raises(FitError):
            jittered_cholesky(np.diag([1.0, -1.0]))


class TestFit:
    def test_interpolation_limit(self):
        X = np.array([[0.0], [1.0]])
        y = np.array([0.3, -0.8])
        model = gp_fit(X, y, kernel=EQKernelParams(1.0, (1.0,)), noise_var=1e-10, optimize_hypers=False)
        m, _ = gp_latent_predict(model, X[1])
        assert m == pytest.approx(-0.8, abs=1e-6)

    def test_kernel_used_verbatim(self, gaussian_data):
        X, y = gaussian_data
        k = EQKernelParams(1.3, (0.9, 1.1))
        model = gp_fit(X, y, kernel=k, noise_var=0.05, optimize_hypers=False)
        assert model.kernel == k and model.noise_var == 0.05

    def test_optimiser_never_worse_than_start(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(-2, 2, size=(50, 1))
        y = np.sin(3 * X[:, 0]) + 0.1 * rng.normal(size=50)
        k0 = EQKernelParams(float(np.var(y)), (1.0,))
        s0 = 0.1 * float(np.var(y))
        init = log_marginal_likelihood(X, y, "gaussian", k0, s0)
        model = gp_fit(X, y, kernel=k0, noise_var=s0, n_restarts=5, seed=0)
        assert model.log_marginal >= init

    def test_factor_reproduces_gram(self, gaussian_data):
        X, y = gaussian_data
        model = gp_fit(X, y, n_restarts=1)
        K = model.kernel.matrix(X, X) + (model.noise_var + model.jitter) * np.eye(len(y))
        L = model.factor
        np.testing.assert_allclose(L @ L.T, K, rtol=1e-8, atol=1e-8 * np.max(K))
        G = model.gram()
        np.testing.assert_array_equal(G, G.T)

    def test_input_validation(self):
        X = np.zeros((3, 1))
        with pytest.raises(DataError):
            gp_fit(X, [0, 1, 2], likelihood="probit")
        with pytest.raises(DataError):
            gp_fit(X, [0, -1, 2], likelihood="poisson")
        with pytest.raises(DataError):
            gp_fit(X, [0, np.nan, 2])
        with pytest.raises(DataError):
            gp_fit(X[:1], [0.0])

    @staticmethod
    def _assert_stationary(model, g):
        # f - m = K grad log p(y | f) at the mode; checked without inverting K,
        # which is badly conditioned. A residual r in the Newton weights maps
        # to at most ||K||_inf * r here.
        K = model.gram()
        tol = 1e-8 * max(1.0, float(np.max(np.abs(g))))
        assert model.laplace.residual < tol
        gap = K @ g - (model.laplace.mode - model.prior_mean)
        assert np.max(np.abs(gap)) <= tol * np.max(np.abs(K).sum(axis=1))

    def test_poisson_laplace_stationarity(self):
        rng = np.random.default_rng(8)
        X = rng.uniform(-3, 3, size=(60, 1))
        y = rng.poisson(np.exp(np.sin(X[:, 0]))).astype(float)
        model = gp_fit(X, y, likelihood="poisson", n_restarts=1)
        self._assert_stationary(model, y - np.exp(model.laplace.mode))

    def test_probit_laplace_stationarity(self, probit_model):
        s = 2 * probit_model.train_y - 1
        f = probit_model.laplace.mode
        g = s * np.exp(-0.5 * f * f - 0.5 * math.log(2 * math.pi) - special.log_ndtr(s * f))
        self._assert_stationary(probit_model, g)


@pytest.fixture(scope="module")
def pair(gaussian_data):
    X, y = gaussian_data
    k = EQKernelParams(1.2, (0.8, 1.4))
    model = gp_fit(X, y, kernel=k, noise_var=0.02, optimize_hypers=False)
    # the reference sees the same effective diagonal, jitter included
    return model, ReferenceGP(X, y, 1.2, (0.8, 1.4), 0.02 + model.jitter)


class TestLatentDerivatives:

    def test_order0_matches_reference(self, pair):
        model, ref = pair
        for x in np.random.default_rng(0).uniform(-2, 2, size=(20, 2)):
            m, v = gp_latent_predict(model, x)
            assert m == pytest.approx(ref.mean(x), rel=1e-7, abs=1e-9)
            assert v == pytest.approx(ref.var(x), rel=1e-5, abs=1e-9)

    def test_variance_bounds(self, pair):
        model, _ = pair
        mom = latent_moments(model, np.random.default_rng(1).uniform(-4, 4, size=(200, 2)))
        assert np.all(mom.var >= 0)
        assert np.all(mom.var <= model.kernel.signal_var + 1e-9)

    def test_first_order(self, pair):
        model, ref = pair
        xs = np.random.default_rng(2).uniform(-2, 2, size=(100, 2))
        mom = latent_moments(model, xs, order=1)
        fd_m = np.array([[central_diff(ref.mean, x, d, 1e-3) for d in range(2)] for x in xs])
        fd_v = np.array([[central_diff(ref.var, x, d, 1e-3) for d in range(2)] for x in xs])
        assert np.max(rel_err(mom.mean_grad, fd_m, 1e-2 * np.max(np.abs(fd_m)))) < 1e-5
        assert np.max(rel_err(mom.var_grad, fd_v, 1e-2 * np.max(np.abs(fd_v)))) < 1e-5

    def test_second_order(self, pair):
        model, ref = pair
        xs = np.random.default_rng(3).uniform(-2, 2, size=(100, 2))
        mom = latent_moments(model, xs, order=2)
        fd_m = np.array([[[central_diff2(ref.mean, x, d, e, 1e-3) for e in range(2)] for d in range(2)] for x in xs])
        fd_v = np.array([[[central_diff2(ref.var, x, d, e, 1e-3) for e in range(2)] for d in range(2)] for x in xs])
        assert np.max(rel_err(mom.mean_hess, fd_m, 1e-2 * np.max(np.abs(fd_m)))) < 1e-4
        assert np.max(rel_err(mom.var_hess, fd_v, 1e-2 * np.max(np.abs(fd_v)))) < 1e-4

    def test_dims_must_match_order(self, pair):
        with pytest.raises(ValueError):
            gp_latent_predict(pair[0], [0.0, 0.0], order=1, dims=(0, 1))


def _param_fd_check(model, n_points, seed, order):
    """Max scaled error of predictive-parameter derivatives against finite differences."""
    xs = np.random.default_rng(seed).uniform(-1.5, 1.5, size=(n_points, 2))
    params0 = lambda z: predictive_params(model, z[None, :], order=0)[0][0, 0]
    _, grads, hess = predictive_params(model, xs, order=order)
    if order == 1:
        fd = np.array([[central_diff(params0, x, d, 1e-3) for d in range(2)] for x in xs])
        got = grads[:, :, 0]
    else:
        fd = np.array([[[central_diff2(params0, x, d, e, 1e-3) for e in range(2)] for d in range(2)] for x in xs])
        got = hess[:, :, :, 0]
    return float(np.max(rel_err(got, fd, 1e-2 * np.max(np.abs(fd)))))


class TestPredictive:
    def test_gaussian_variance_gradient_identity(self, gaussian_data):
        X, y = gaussian_data
        model = gp_fit(X, y, kernel=EQKernelParams(1.0, (1.0, 1.0)), noise_var=0.1, optimize_hypers=False)
        x = np.array([0.2, -0.4])
        s = gp_predictive(model, x)
        mom = latent_moments(model, x[None, :], order=1)
        np.testing.assert_array_equal(s.grad[:, 1], mom.var_grad[0])
        np.testing.assert_array_equal(s.grad[:, 0], mom.mean_grad[0])
        assert s.dist.variance == pytest.approx(mom.var[0] + 0.1)

    def test_probit_half_at_zero_mean(self):
        X = np.array([[-1.0], [1.0]])
        model = gp_fit(X, [0.0, 1.0], likelihood="probit", kernel=EQKernelParams(1.0, (1.0,)), optimize_hypers=False)
        m, v = gp_latent_predict(model, [0.0])
        assert abs(m) < 1e-14 and v > 0
        assert gp_predict_dist(model, [0.0]).prob == pytest.approx(0.5, abs=1e-14)

    def test_distribution_types(self, probit_model, poisson_model):
        assert isinstance(gp_predict_dist(probit_model, [0.0, 0.0]), Bernoulli)
        assert isinstance(gp_predict_dist(poisson_model, [0.0, 0.0]), Poisson)

    def test_poisson_first_order(self, poisson_model):
        assert _param_fd_check(poisson_model, 30, 1, 1) < 1e-5

    def test_poisson_second_order(self, poisson_model):
        assert _param_fd_check(poisson_model, 30, 2, 2) < 1e-4

    def test_probit_first_order(self, probit_model):
        assert _param_fd_check(probit_model, 30, 3, 1) < 1e-5

    def test_probit_second_order(self, probit_model):
        assert _param_fd_check(probit_model, 30, 4, 2) < 1e-4

    def test_rsens_matches_kl_fd_all_likelihoods(self, probit_model, poisson_model):
        rng = np.random.default_rng(9)
        X = rng.uniform(-2, 2, size=(30, 2))
        y = np.tanh(X[:, 0]) + 0.5 * X[:, 1] + 0.05 * rng.normal(size=30)
        gauss = gp_fit(X, y, kernel=EQKernelParams(1.0, (1.5, 3.0)), noise_var=0.01, optimize_hypers=False)
        for model in (gauss, probit_model, poisson_model):
            for x in rng.uniform(-1, 1, size=(10, 2)):
                s = gp_predictive(model, x)
                for d in range(2):
                    ref = rsens_local(s, d)
                    fd = kl_finite_difference(lambda z: gp_predict_dist(model, z), x, d, 1e-5)
                    assert abs(fd - ref) / max(ref, 1e-8) < 1e-3 or abs(fd - ref) < 1e-6

    def test_log_predictive_density(self, gaussian_data, poisson_model):
        X, y = gaussian_data
        model = gp_fit(X, y, n_restarts=1)
        lpd = log_predictive_density(model, X[:3], y[:3])
        for i in range(3):
            d = gp_predict_dist(model, X[i])
            assert lpd[i] == pytest.approx(-0.5 * math.log(2 * math.pi * d.variance) - (y[i] - d.mean) ** 2 / (2 * d.variance))
        lam = gp_predict_dist(poisson_model, X[0]).rate
        assert log_predictive_density(poisson_model, X[:1], [2.0])[0] == pytest.approx(2 * math.log(lam) - lam - math.log(2))

    def test_variance_shrinks_with_more_data(self):
        rng = np.random.default_rng(10)
        X = rng.uniform(-1, 1, size=(200, 1))
        y = np.sin(3 * X[:, 0]) + 0.05 * rng.normal(size=200)
        k = EQKernelParams(1.0, (0.5,))
        x0 = X[0]
        vs = []
        for n in (10, 50, 200):
            model = gp_fit(X[:n], y[:n], kernel=k, noise_var=0.0025, optimize_hypers=False)
            vs.append(gp_latent_predict(model, x0)[1])
        assert vs[0] > vs[1] > vs[2]
