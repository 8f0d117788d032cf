"""Bayesian linear regression (Student-t predictive) and Laplace probit
regression, with their closed-form R-sens expressions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from .errors import DataError, FitError
from .gp import PROB_CLAMP
from .predictive import Bernoulli, StudentT
from .sensitivity import ParamSensitivity

__all__ = [
    "BayesLinearModel",
    "LaplaceLogisticModel",
    "blm_fit",
    "blm_predict",
    "blm_sensitivity",
    "blm_rsens_closed_form",
    "blm_rsens_terms",
    "logistic_fit",
    "logistic_predict",
    "logistic_sensitivity",
    "logistic_rsens",
]


@dataclass(frozen=True)
class BayesLinearModel:
    beta_hat: np.ndarray
    s2: float
    gram_inv: np.ndarray
    dof: float


def blm_fit(X, y) -> BayesLinearModel:
    """Least-squares fit under the improper prior on (beta, log sigma).

    No intercept column is added; include one in ``X`` if wanted. A dof of
    2 or less gives a Student-t with infinite variance, which is still a
    valid predictive.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    N, D = X.shape
    if N <= D:
        raise DataError(f"need more observations than predictors (N={N}, D={D})")
    gram = X.T @ X
    try:
        c = linalg.cho_factor(gram, lower=True)
    except linalg.LinAlgError as exc:
        raise DataError("X'X is singular") from exc
    # a collinear design can factor with a pivot that is pure rounding noise
    if np.min(np.diag(c[0])) ** 2 <= D * np.finfo(float).eps * np.max(np.diag(gram)):
        raise DataError("X'X is singular")
    gram_inv = linalg.cho_solve(c, np.eye(D))
    gram_inv = 0.5 * (gram_inv + gram_inv.T)
    beta = linalg.cho_solve(c, X.T @ y)
    resid = y - X @ beta
    s2 = float(resid @ resid) / (N - D)
    return BayesLinearModel(beta_hat=beta, s2=s2, gram_inv=gram_inv, dof=float(N - D))


def _blm_moments(model: BayesLinearModel, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    V = model.gram_inv @ x
    sq_scale = model.s2 * (1.0 + float(x @ V))
    return float(x @ model.beta_hat), sq_scale, V


def blm_predict(model: BayesLinearModel, x) -> StudentT:
    loc, sq_scale, _ = _blm_moments(model, x)
    return StudentT(loc, sq_scale, model.dof)


def blm_sensitivity(model: BayesLinearModel, x) -> ParamSensitivity:
    """Predictive with derivatives (beta_d, 2 s^2 V_d, 0) for each input d."""
    loc, sq_scale, V = _blm_moments(model, x)
    D = len(model.beta_hat)
    grad = np.column_stack([model.beta_hat, 2.0 * model.s2 * V, np.zeros(D)])
    return ParamSensitivity(StudentT(loc, sq_scale, model.dof), grad)


def blm_rsens_terms(model: BayesLinearModel, x, d: int):
    """The two summands under the square root of the closed-form R-sens.

    Returns ``(mean_term, scale_term)``: the mean-slope part
    (nu + 1) beta_d^2 / ((nu + 3) Var) and the uncertainty part
    2 nu s^4 V_d^2 / ((nu + 3) Var^2).
    """
    _, var, V = _blm_moments(model, x)
    nu = model.dof
    mean_term = (nu + 1) * model.beta_hat[d] ** 2 / ((nu + 3) * var)
    scale_term = 2 * nu * model.s2**2 * V[d] ** 2 / ((nu + 3) * var * var)
    return float(mean_term), float(scale_term)


def blm_rsens_closed_form(model: BayesLinearModel, x, d: int) -> float:
    _, var, V = _blm_moments(model, x)
    nu = model.dof
    num = (nu + 1) * model.beta_hat[d] ** 2 + 2 * nu * model.s2**2 * V[d] ** 2 / var
    return math.sqrt(num / ((nu + 3) * var))


# ---------------------------------------------------------------------------
# probit regression with a Gaussian prior, Laplace approximation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LaplaceLogisticModel:
    """Posterior N(beta_hat, hess_inv) for a probit-link binary regression."""

    beta_hat: np.ndarray
    hess_inv: np.ndarray
    prior_var: float


def _neg_log_post(beta, X, s, prior_var):
    z = s * (X @ beta)
    return -special.log_ndtr(z).sum() + 0.5 * beta @ beta / prior_var


def logistic_fit(X, y, prior_var: float = 1.0, max_iter: int = 100, tol: float = 1e-8) -> LaplaceLogisticModel:
    """MAP by damped Newton on the probit log posterior, prior N(0, prior_var I).

    Stops when the gradient inf-norm falls below ``tol``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if not np.all((y == 0) | (y == 1)):
        raise DataError("targets must be 0/1")
    if y.min() == y.max():
        raise DataError("need at least one observation of each class")
    if prior_var <= 0:
        raise DataError("prior variance must be positive")
    s = 2.0 * y - 1.0
    D = X.shape[1]
    beta = np.zeros(D)

    def grad_hess(b):
        z = s * (X @ b)
        r = np.exp(-0.5 * z * z - 0.5 * math.log(2 * math.pi) - special.log_ndtr(z))
        g = -X.T @ (s * r) + b / prior_var
        w = r * (z + r)
        H = (X * w[:, None]).T @ X + np.eye(D) / prior_var
        return g, H

    obj = _neg_log_post(beta, X, s, prior_var)
    for _ in range(max_iter):
        g, H = grad_hess(beta)
        if np.max(np.abs(g)) < tol:
            hess_inv = linalg.cho_solve(linalg.cho_factor(H, lower=True), np.eye(D))
            return LaplaceLogisticModel(beta, 0.5 * (hess_inv + hess_inv.T), float(prior_var))
        step = linalg.solve(H, g, assume_a="pos")
        t = 1.0
        while True:
            cand = beta - t * step
            cand_obj = _neg_log_post(cand, X, s, prior_var)
            if cand_obj <= obj or t < 1e-12:
                break
            t *= 0.5
        beta, obj = cand, cand_obj
    raise FitError(f"probit Newton iterations did not converge in {max_iter} steps")


def _logistic_moments(model: LaplaceLogisticModel, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    Hx = model.hess_inv @ x
    q = 1.0 + float(x @ Hx)
    lin = float(x @ model.beta_hat)
    z = lin / math.sqrt(q)
    return lin, q, z, Hx


def logistic_predict(model: LaplaceLogisticModel, x) -> Bernoulli:
    _, _, z, _ = _logistic_moments(model, x)
    return Bernoulli(float(np.clip(special.ndtr(z), PROB_CLAMP, 1 - PROB_CLAMP)))


def logistic_sensitivity(model: LaplaceLogisticModel, x) -> ParamSensitivity:
    lin, q, z, Hx = _logistic_moments(model, x)
    phi = math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    dpi = phi * (model.beta_hat / math.sqrt(q) - lin * Hx / q**1.5)
    return ParamSensitivity(logistic_predict(model, x), dpi[:, None])


def logistic_rsens(model: LaplaceLogisticModel, x, d: int) -> float:
    """Closed-form R-sens of the probit-regression predictive for input ``d``."""
    lin, q, z, Hx = _logistic_moments(model, x)
    pi = float(np.clip(special.ndtr(z), PROB_CLAMP, 1 - PROB_CLAMP))
    phi = math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    bracket = model.beta_hat[d] / math.sqrt(q) - lin * Hx[d] / q**1.5
    return math.sqrt(1.0 / (pi * (1.0 - pi))) * phi * abs(bracket)
