"""Gaussian-process models with exponentiated-quadratic covariance.

Supports Gaussian, probit and Poisson (log link) observation models; the
latter two use a Laplace approximation of the latent posterior. Predictive
means and variances come with analytic first and second derivatives with
respect to the test input, which feed the R-sens machinery.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, optimize, special

from .errors import DataError, FitError
from .predictive import Bernoulli, Gaussian, Poisson, PredictiveDistribution
from .sensitivity import ParamSensitivity

log = logging.getLogger(__name__)

LIKELIHOODS = ("gaussian", "probit", "poisson")

JITTER_START = 1e-8
JITTER_MAX = 1e-2
PROB_CLAMP = 1e-12
NEWTON_MAX_ITER = 100
NEWTON_TOL = 1e-8

_LOG_BOUNDS = (-12.0, 12.0)
_NOISE_LOG_BOUNDS = (math.log(1e-6), 12.0)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EQKernelParams:
    """sigma_f^2 * exp(-0.5 * sum_k (x_k - x'_k)^2 / l_k^2)."""

    signal_var: float
    lengthscales: tuple

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        values = (self.signal_var,) + ls
        if not all(math.isfinite(v) and v > 0 for v in values):
            raise DataError(f"kernel parameters must be finite and positive: {values}")

    @property
    def n_dims(self) -> int:
        return len(self.lengthscales)

    @property
    def prior_var(self) -> float:
        return self.signal_var

    def matrix(self, A, B) -> np.ndarray:
        ls = np.asarray(self.lengthscales)
        A = np.atleast_2d(A) / ls
        B = np.atleast_2d(B) / ls
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
        return self.signal_var * np.exp(-0.5 * np.clip(sq, 0.0, None))

    def derivatives(self, x, X, order: int = 1):
        """k(x, X_i) and its derivatives with respect to ``x``.

        Returns ``(k, G)`` or ``(k, G, H)`` with shapes (N,), (N, D), (N, D, D).
        """
        ls2 = np.asarray(self.lengthscales) ** 2
        diff = np.asarray(x, dtype=float)[None, :] - np.atleast_2d(X)
        k = self.signal_var * np.exp(-0.5 * (diff * diff / ls2).sum(1))
        r = diff / ls2
        G = -k[:, None] * r
        if order < 2:
            return k, G
        H = k[:, None, None] * (r[:, :, None] * r[:, None, :])
        H -= k[:, None, None] * np.diag(1.0 / ls2)[None, :, :]
        return k, G, H

    # hyperparameters on log scale: [log signal_var, log l_1, ..., log l_D]
    def log_params(self) -> np.ndarray:
        return np.log(np.r_[self.signal_var, self.lengthscales])

    def with_log_params(self, theta) -> "EQKernelParams":
        theta = np.asarray(theta, dtype=float)
        return EQKernelParams(float(np.exp(theta[0])), tuple(np.exp(theta[1:])))

    def param_grads(self, X, K=None) -> list:
        X = np.atleast_2d(X)
        if K is None:
            K = self.matrix(X, X)
        grads = [K]
        for k, l in enumerate(self.lengthscales):
            d = X[:, k][:, None] - X[:, k][None, :]
            grads.append(K * (d * d) / (l * l))
        return grads


@dataclass(frozen=True)
class AdditiveEQKernel:
    """Sum of EQ kernels, each acting on a subset of the input dimensions."""

    n_dims: int
    terms: tuple  # ((dims tuple, EQKernelParams), ...)

    def __post_init__(self):
        terms = tuple((tuple(int(d) for d in dims), kern) for dims, kern in self.terms)
        for dims, kern in terms:
            if kern.n_dims != len(dims) or max(dims) >= self.n_dims:
                raise DataError(f"kernel term on dims {dims} is inconsistent")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def build(cls, n_dims: int, groups: Sequence[Sequence[int]], signal_var=1.0, lengthscale=1.0):
        terms = tuple(
            (tuple(g), EQKernelParams(signal_var, (lengthscale,) * len(g))) for g in groups
        )
        return cls(n_dims, terms)

    @property
    def prior_var(self) -> float:
        return sum(k.signal_var for _, k in self.terms)

    def matrix(self, A, B) -> np.ndarray:
        A = np.atleast_2d(A)
        B = np.atleast_2d(B)
        return sum(kern.matrix(A[:, dims], B[:, dims]) for dims, kern in self.terms)

    def derivatives(self, x, X, order: int = 1):
        x = np.asarray(x, dtype=float)
        X = np.atleast_2d(X)
        n, D = X.shape[0], self.n_dims
        k = np.zeros(n)
        G = np.zeros((n, D))
        H = np.zeros((n, D, D)) if order >= 2 else None
        for dims, kern in self.terms:
            idx = list(dims)
            out = kern.derivatives(x[idx], X[:, idx], order)
            k += out[0]
            G[:, idx] += out[1]
            if H is not None:
                H[np.ix_(range(n), idx, idx)] += out[2]
        return (k, G) if order < 2 else (k, G, H)

    def log_params(self) -> np.ndarray:
        return np.concatenate([kern.log_params() for _, kern in self.terms])

    def with_log_params(self, theta) -> "AdditiveEQKernel":
        theta = np.asarray(theta, dtype=float)
        terms, pos = [], 0
        for dims, kern in self.terms:
            size = 1 + len(dims)
            terms.append((dims, kern.with_log_params(theta[pos : pos + size])))
            pos += size
        return AdditiveEQKernel(self.n_dims, tuple(terms))

    def param_grads(self, X, K=None) -> list:
        X = np.atleast_2d(X)
        grads = []
        for dims, kern in self.terms:
            grads.extend(kern.param_grads(X[:, list(dims)]))
        return grads


def kernel_eval(params: EQKernelParams, xi, xj) -> float:
    return float(params.matrix(np.atleast_2d(xi), np.atleast_2d(xj))[0, 0])


def kernel_grad(params: EQKernelParams, xi, xj, d: int) -> float:
    """d k(xi, xj) / d xi_d."""
    _, G = params.derivatives(xi, np.atleast_2d(xj), order=1)
    return float(G[0, d])


def kernel_hess(params: EQKernelParams, xi, xj, d: int, e: int) -> float:
    """d^2 k(xi, xj) / d xi_d d xi_e, including the -delta_de / l_d^2 term."""
    _, _, H = params.derivatives(xi, np.atleast_2d(xj), order=2)
    return float(H[0, d, e])


# ---------------------------------------------------------------------------
# factorisation
# ---------------------------------------------------------------------------


def jittered_cholesky(M: np.ndarray):
    """Lower Cholesky factor of ``M + jitter * mean(diag(M)) * I``.

    The relative jitter starts at 1e-8 and doubles until factorisation
    succeeds or it would exceed 1e-2. Returns ``(L, absolute_jitter)``.
    """
    scale = float(np.mean(np.diag(M)))
    if not math.isfinite(scale) or scale <= 0:
        scale = 1.0
    rel = JITTER_START
    n = M.shape[0]
    while rel <= JITTER_MAX:
        jitter = rel * scale
        try:
            L = linalg.cholesky(M + jitter * np.eye(n), lower=True, check_finite=False)
            if np.all(np.isfinite(L)):
                return L, jitter
        except linalg.LinAlgError:
            pass
        rel *= 2.0
    raise FitError("matrix is not positive definite even after maximum jitter")


# ---------------------------------------------------------------------------
# observation models for the Laplace approximation
# ---------------------------------------------------------------------------


def _probit_terms(f, y):
    s = 2.0 * y - 1.0
    logp = special.log_ndtr(s * f)
    # ratio phi(f) / Phi(s f), computed in log space
    r = np.exp(-0.5 * f * f - 0.5 * math.log(2 * math.pi) - logp)
    grad = s * r
    W = r * r + s * f * r
    return logp, grad, W


def _poisson_terms(f, y):
    mu = np.exp(f)
    logp = y * f - mu - special.gammaln(y + 1.0)
    return logp, y - mu, mu


_LIK_TERMS = {"probit": _probit_terms, "poisson": _poisson_terms}


@dataclass(frozen=True)
class LaplaceState:
    mode: np.ndarray
    W: np.ndarray
    grad: np.ndarray
    residual: float
    iterations: int


def laplace_mode(K: np.ndarray, y: np.ndarray, likelihood: str, prior_mean: float = 0.0):
    """Newton iterations for the posterior mode of the latent values.

    Uses the stabilised B = I + W^1/2 K W^1/2 formulation with step halving
    on the unnormalised log posterior. Returns ``(state, L_B, log_marginal)``.
    """
    terms = _LIK_TERMS[likelihood]
    n = len(y)
    f = np.zeros(n)
    a = np.zeros(n)

    def objective(a_, f_):
        return -0.5 * a_ @ f_ + terms(f_ + prior_mean, y)[0].sum()

    psi = objective(a, f)
    for it in range(1, NEWTON_MAX_ITER + 1):
        _, g, W = terms(f + prior_mean, y)
        sW = np.sqrt(np.clip(W, 0.0, None))
        B = np.eye(n) + sW[:, None] * K * sW[None, :]
        L = linalg.cholesky(B, lower=True, check_finite=False)
        b = W * f + g
        a_new = b - sW * linalg.cho_solve((L, True), sW * (K @ b), check_finite=False)
        step = 1.0
        while True:
            a_try = a + step * (a_new - a)
            f_try = K @ a_try
            psi_try = objective(a_try, f_try)
            if psi_try >= psi - 1e-12 * abs(psi) or step < 1e-10:
                break
            step *= 0.5
        a, f, psi = a_try, f_try, psi_try
        _, g, W = terms(f + prior_mean, y)
        residual = float(np.max(np.abs(g - a)))
        if residual < NEWTON_TOL * max(1.0, float(np.max(np.abs(g)))):
            sW = np.sqrt(np.clip(W, 0.0, None))
            B = np.eye(n) + sW[:, None] * K * sW[None, :]
            L = linalg.cholesky(B, lower=True, check_finite=False)
            log_marg = psi - np.log(np.diag(L)).sum()
            state = LaplaceState(mode=f + prior_mean, W=W, grad=g, residual=residual, iterations=it)
            return state, L, float(log_marg)
    raise FitError(f"Laplace Newton iterations did not converge in {NEWTON_MAX_ITER} steps")


# ---------------------------------------------------------------------------
# fitted model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FittedGP:
    """Immutable trained GP.

    Latent predictions are ``mean = prior_mean + k(x, X) @ weights`` and
    ``var = k(x, x) - k(x, X) @ precision @ k(X, x)``; ``precision`` is
    (K + s2 I)^-1 for Gaussian noise or W^1/2 B^-1 W^1/2 under Laplace.
    """

    train_x: np.ndarray
    kernel: object
    noise_var: float
    likelihood: str
    factor: np.ndarray
    weights: np.ndarray
    precision: np.ndarray
    jitter: float
    log_marginal: float
    prior_mean: float = 0.0
    laplace: LaplaceState | None = None
    train_y: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_dims(self) -> int:
        return self.train_x.shape[1]

    def gram(self) -> np.ndarray:
        return self.kernel.matrix(self.train_x, self.train_x) + self.jitter * np.eye(len(self.train_x))


def _evaluate(X, y, kernel, noise_var, likelihood, prior_mean):
    """Factorise, solve, and return a FittedGP."""
    n = X.shape[0]
    K = kernel.matrix(X, X)
    if likelihood == "gaussian":
        L, jitter = jittered_cholesky(K + noise_var * np.eye(n))
        weights = linalg.cho_solve((L, True), y - prior_mean, check_finite=False)
        precision = linalg.cho_solve((L, True), np.eye(n), check_finite=False)
        resid = y - prior_mean
        log_marg = -0.5 * resid @ weights - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2 * math.pi)
        return FittedGP(X, kernel, noise_var, likelihood, L, weights, precision, jitter, float(log_marg), prior_mean, None, y)
    Lk, jitter = jittered_cholesky(K)
    Kj = K + jitter * np.eye(n)
    state, LB, log_marg = laplace_mode(Kj, y, likelihood, prior_mean)
    sW = np.sqrt(np.clip(state.W, 0.0, None))
    Binv = linalg.cho_solve((LB, True), np.eye(n), check_finite=False)
    precision = sW[:, None] * Binv * sW[None, :]
    return FittedGP(X, kernel, 0.0, likelihood, LB, state.grad, precision, jitter, log_marg, prior_mean, state, y)


def _gaussian_nlml_and_grad(theta, X, y, kernel, prior_mean):
    kern = kernel.with_log_params(theta[:-1])
    noise = float(np.exp(theta[-1]))
    n = len(y)
    K = kern.matrix(X, X)
    try:
        L, jitter = jittered_cholesky(K + noise * np.eye(n))
    except FitError:
        return 1e25, np.zeros_like(theta)
    resid = y - prior_mean
    alpha = linalg.cho_solve((L, True), resid, check_finite=False)
    nlml = 0.5 * resid @ alpha + np.log(np.diag(L)).sum() + 0.5 * n * math.log(2 * math.pi)
    Kinv = linalg.cho_solve((L, True), np.eye(n), check_finite=False)
    inner = np.outer(alpha, alpha) - Kinv
    dKs = kern.param_grads(X, K) + [noise * np.eye(n)]
    grad = np.array([-0.5 * np.sum(inner * dK) for dK in dKs])
    return float(nlml), grad


def _laplace_nlml(theta, X, y, kernel, likelihood, prior_mean):
    kern = kernel.with_log_params(theta)
    try:
        K = kern.matrix(X, X)
        Lk, jitter = jittered_cholesky(K)
        _, _, log_marg = laplace_mode(K + jitter * np.eye(len(y)), y, likelihood, prior_mean)
    except (FitError, linalg.LinAlgError):
        return 1e25
    return -log_marg


def default_kernel(X, y, likelihood: str = "gaussian") -> EQKernelParams:
    D = np.atleast_2d(X).shape[1]
    sv = float(np.var(y)) if likelihood == "gaussian" else 1.0
    return EQKernelParams(max(sv, 1e-6), (1.0,) * D)


def gp_fit(
    X,
    y,
    likelihood: str = "gaussian",
    kernel=None,
    noise_var: float | None = None,
    optimize_hypers: bool = True,
    n_restarts: int = 5,
    seed: int = 0,
    max_iter: int = 200,
    prior_mean: float | None = None,
) -> FittedGP:
    """Fit a GP, optionally maximising the (Laplace) log marginal likelihood.

    Optimisation runs L-BFGS on log-hyperparameters from ``n_restarts``
    starting points: the initial values, then seeded Gaussian perturbations
    of them. Each restart stops when the gradient inf-norm drops below 1e-6
    or after ``max_iter`` iterations. For Poisson the latent prior mean
    defaults to log(mean(y)); otherwise to zero.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if likelihood not in LIKELIHOODS:
        raise DataError(f"unknown likelihood {likelihood!r}; expected one of {LIKELIHOODS}")
    if X.shape[0] != y.shape[0]:
        raise DataError("X and y have different numbers of rows")
    if X.shape[0] < 2:
        raise DataError("need at least two observations")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("missing or non-finite values in training data")
    if likelihood == "probit" and not np.all((y == 0) | (y == 1)):
        raise DataError("probit likelihood needs 0/1 targets")
    if likelihood == "poisson" and (np.any(y < 0) or np.any(y != np.round(y))):
        raise DataError("Poisson likelihood needs non-negative integer targets")

    if kernel is None:
        kernel = default_kernel(X, y, likelihood)
    if prior_mean is None:
        prior_mean = math.log(max(float(np.mean(y)), 1e-3)) if likelihood == "poisson" else 0.0
    if likelihood == "gaussian" and noise_var is None:
        noise_var = max(0.1 * float(np.var(y)), 1e-6)
    noise_var = 0.0 if likelihood != "gaussian" else float(noise_var)

    if not optimize_hypers:
        return _evaluate(X, y, kernel, noise_var, likelihood, prior_mean)

    rng = np.random.default_rng(seed)
    k_theta = kernel.log_params()
    if likelihood == "gaussian":
        theta0 = np.r_[k_theta, math.log(max(noise_var, 1e-6))]
        bounds = [_LOG_BOUNDS] * len(k_theta) + [_NOISE_LOG_BOUNDS]

        def fun(t):
            return _gaussian_nlml_and_grad(t, X, y, kernel, prior_mean)

        jac = True
    else:
        theta0 = k_theta.copy()
        bounds = [_LOG_BOUNDS] * len(k_theta)

        def fun(t):
            return _laplace_nlml(t, X, y, kernel, likelihood, prior_mean)

        jac = None

    def value(t):
        out = fun(t)
        return out[0] if jac else out

    best_theta, best_val = None, np.inf
    for restart in range(max(n_restarts, 1)):
        start = theta0 if restart == 0 else theta0 + rng.normal(0.0, 1.0, size=theta0.shape)
        start = np.clip(start, [b[0] for b in bounds], [b[1] for b in bounds])
        start_val = value(start)
        res = optimize.minimize(
            fun,
            start,
            jac=jac,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": max_iter, "gtol": 1e-6},
        )
        theta, val = (res.x, res.fun) if res.fun <= start_val else (start, start_val)
        log.debug("restart %d: nlml %.6g -> %.6g (%s)", restart, start_val, val, res.message)
        if val < best_val:
            best_theta, best_val = theta, val

    if likelihood == "gaussian":
        kernel = kernel.with_log_params(best_theta[:-1])
        noise_var = float(np.exp(best_theta[-1]))
    else:
        kernel = kernel.with_log_params(best_theta)
    return _evaluate(X, y, kernel, noise_var, likelihood, prior_mean)


def log_marginal_likelihood(X, y, likelihood, kernel, noise_var=None, prior_mean=None) -> float:
    """(Laplace-approximate) log marginal likelihood at fixed hyperparameters."""
    return gp_fit(X, y, likelihood, kernel, noise_var, optimize_hypers=False, prior_mean=prior_mean).log_marginal


# ---------------------------------------------------------------------------
# latent predictions and derivatives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatentMoments:
    """Latent mean/variance at n points with optional input-derivatives."""

    mean: np.ndarray  # (n,)
    var: np.ndarray  # (n,)
    mean_grad: np.ndarray | None = None  # (n, D)
    var_grad: np.ndarray | None = None  # (n, D)
    mean_hess: np.ndarray | None = None  # (n, D, D)
    var_hess: np.ndarray | None = None  # (n, D, D)


def latent_moments(model: FittedGP, Xs, order: int = 0, chunk: int = 32) -> LatentMoments:
    """Posterior latent mean and variance at the rows of ``Xs``.

    With ``order >= 1`` also returns input gradients; with ``order == 2``
    the full input Hessians. The prior variance k(x, x) is constant for the
    stationary kernels used here, so its input derivatives vanish.
    """
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    n, D = Xs.shape
    X = model.train_x
    A = model.precision
    a = model.weights
    if order == 0:
        Ks = model.kernel.matrix(Xs, X)
        mean = model.prior_mean + Ks @ a
        var = model.kernel.prior_var - np.einsum("ij,jk,ik->i", Ks, A, Ks)
        return LatentMoments(mean, np.clip(var, 0.0, None))

    mean = np.empty(n)
    var = np.empty(n)
    mg = np.empty((n, D))
    vg = np.empty((n, D))
    mh = np.empty((n, D, D)) if order >= 2 else None
    vh = np.empty((n, D, D)) if order >= 2 else None
    for i in range(n):
        out = model.kernel.derivatives(Xs[i], X, order=min(order, 2))
        k, G = out[0], out[1]
        Ak = A @ k
        mean[i] = model.prior_mean + k @ a
        var[i] = model.kernel.prior_var - k @ Ak
        mg[i] = G.T @ a
        vg[i] = -2.0 * G.T @ Ak
        if order >= 2:
            H = out[2]
            mh[i] = np.einsum("ndE,n->dE", H, a)
            vh[i] = -2.0 * (np.einsum("ndE,n->dE", H, Ak) + G.T @ A @ G)
    return LatentMoments(mean, np.clip(var, 0.0, None), mg, vg, mh, vh)


def gp_latent_predict(model: FittedGP, x, order: int = 0, dims: tuple = ()):
    """Latent (E[f*], Var[f*]) at ``x``, or their derivatives.

    ``order=1, dims=(d,)`` gives the first derivatives with respect to x_d;
    ``order=2, dims=(d, e)`` the mixed second derivatives.
    """
    if len(dims) != order:
        raise ValueError("dims must list one index per derivative order")
    m = latent_moments(model, np.atleast_2d(x), order=order)
    if order == 0:
        return float(m.mean[0]), float(m.var[0])
    if order == 1:
        (d,) = dims
        return float(m.mean_grad[0, d]), float(m.var_grad[0, d])
    d, e = dims
    return float(m.mean_hess[0, d, e]), float(m.var_hess[0, d, e])


# ---------------------------------------------------------------------------
# predictive distributions with parameter derivatives
# ---------------------------------------------------------------------------


def _clamp_prob(p):
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def predictive_params(model: FittedGP, Xs, order: int = 1):
    """Predictive parameters and their input-derivatives at the rows of ``Xs``.

    Returns ``(params, grads, hess)`` with shapes (n, M), (n, D, M) and
    (n, D, D, M); entries beyond ``order`` are None.
    """
    mom = latent_moments(model, Xs, order=order)
    m, v = mom.mean, mom.var
    n = len(m)
    lik = model.likelihood
    if lik == "gaussian":
        params = np.stack([m, v + model.noise_var], axis=1)
        grads = hess = None
        if order >= 1:
            grads = np.stack([mom.mean_grad, mom.var_grad], axis=2)
        if order >= 2:
            hess = np.stack([mom.mean_hess, mom.var_hess], axis=3)
        return params, grads, hess

    if lik == "poisson":
        lam = np.exp(m + 0.5 * v)
        params = lam[:, None]
        grads = hess = None
        if order >= 1:
            u = mom.mean_grad + 0.5 * mom.var_grad  # (n, D)
            grads = (lam[:, None] * u)[:, :, None]
        if order >= 2:
            uu = u[:, :, None] * u[:, None, :] + mom.mean_hess + 0.5 * mom.var_hess
            hess = (lam[:, None, None] * uu)[:, :, :, None]
        return params, grads, hess

    # probit: pi = Phi(z), z = m / sqrt(1 + v)
    s2 = 1.0 + v
    s = np.sqrt(s2)
    z = m / s
    pi = special.ndtr(z)
    params = pi[:, None]
    grads = hess = None
    if order >= 1:
        phi = np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        zg = mom.mean_grad / s[:, None] - (m / (2 * s2 * s))[:, None] * mom.var_grad
        grads = (phi[:, None] * zg)[:, :, None]
    if order >= 2:
        mg, vg = mom.mean_grad, mom.var_grad
        s3 = (s2 * s)[:, None, None]
        s5 = (s2 * s2 * s)[:, None, None]
        mm = m[:, None, None]
        zh = (
            mom.mean_hess / s[:, None, None]
            - (mg[:, :, None] * vg[:, None, :] + vg[:, :, None] * mg[:, None, :]) / (2 * s3)
            - mm * mom.var_hess / (2 * s3)
            + 3 * mm * vg[:, :, None] * vg[:, None, :] / (4 * s5)
        )
        hess = (phi[:, None, None] * (zh - z[:, None, None] * zg[:, :, None] * zg[:, None, :]))[:, :, :, None]
    return params, grads, hess


def _make_dist(likelihood: str, row) -> PredictiveDistribution:
    if likelihood == "gaussian":
        return Gaussian(float(row[0]), float(row[1]))
    if likelihood == "poisson":
        return Poisson(float(row[0]))
    return Bernoulli(float(_clamp_prob(row[0])))


def gp_predict_dist(model: FittedGP, x) -> PredictiveDistribution:
    """Predictive distribution of y* at a single input."""
    params, _, _ = predictive_params(model, np.atleast_2d(x), order=0)
    return _make_dist(model.likelihood, params[0])


def gp_predictive_batch(model: FittedGP, Xs, order: int = 1, pairs=None) -> list:
    """ParamSensitivity objects for every row of ``Xs``.

    With ``order=2`` cross-derivatives are stored for ``pairs`` (default:
    all d < e).
    """
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    params, grads, hess = predictive_params(model, Xs, order=order)
    D = Xs.shape[1]
    if order >= 2 and pairs is None:
        pairs = [(d, e) for d in range(D) for e in range(d + 1, D)]
    out = []
    for i in range(Xs.shape[0]):
        dist = _make_dist(model.likelihood, params[i])
        grad = grads[i] if grads is not None else np.zeros((D, dist.n_params))
        cross = {}
        if order >= 2:
            cross = {(d, e): hess[i, d, e] for d, e in pairs}
        out.append(ParamSensitivity(dist, grad, cross))
    return out


def gp_predictive(model: FittedGP, x, order: int = 1, dims: tuple | None = None) -> ParamSensitivity:
    """Predictive distribution at ``x`` with parameter derivatives.

    Gaussian: (E[f*], Var[f*] + noise). Probit: Phi(E[f*] / sqrt(1 + Var[f*])),
    clamped 1e-12 away from 0 and 1. Poisson: exp(E[f*] + Var[f*] / 2).
    With ``order=2`` and ``dims=(d, e)`` only that cross-derivative is stored.
    """
    pairs = [tuple(dims)] if (order >= 2 and dims) else None
    return gp_predictive_batch(model, np.atleast_2d(x), order=order, pairs=pairs)[0]


def log_predictive_density(model: FittedGP, Xs, ys) -> np.ndarray:
    """Pointwise log predictive density of held-out targets."""
    params, _, _ = predictive_params(model, Xs, order=0)
    ys = np.asarray(ys, dtype=float)
    if model.likelihood == "gaussian":
        return -0.5 * (np.log(2 * np.pi * params[:, 1]) + (ys - params[:, 0]) ** 2 / params[:, 1])
    if model.likelihood == "poisson":
        lam = params[:, 0]
        return ys * np.log(lam) - lam - special.gammaln(ys + 1)
    pi = _clamp_prob(params[:, 0])
    return np.where(ys == 1, np.log(pi), np.log1p(-pi))


def predictive_mean(model: FittedGP, Xs) -> np.ndarray:
    """Mean of y* (for probit: the predictive probability)."""
    params, _, _ = predictive_params(model, Xs, order=0)
    return params[:, 0]
