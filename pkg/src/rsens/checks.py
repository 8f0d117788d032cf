"""Fast numerical self-checks run by ``rsens check``.

Each check compares an analytic quantity with an independent numerical
route and reports the worst relative discrepancy against a tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import gp_fit, gp_predict_dist, gp_predictive, latent_moments
from .linear import blm_fit, blm_rsens_closed_form, blm_sensitivity
from .predictive import Gaussian, StudentT, fisher_information, renyi_divergence
from .sensitivity import kl_finite_difference, rsens_local

__all__ = ["CheckResult", "run_checks"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tol)


def _rel(a, b, floor=1e-12):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


def renyi_hessian(p: Gaussian, alpha: float, h: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of q -> D_alpha(p || q) at q = p."""
    base = p.params
    scale = np.array([max(1.0, abs(base[0])), base[1]])
    steps = h * scale
    H = np.zeros((2, 2))

    def div(delta):
        q = Gaussian(*(base + delta))
        return renyi_divergence(p, q, alpha)

    for i in range(2):
        for j in range(2):
            ei = np.eye(2)[i] * steps[i]
            ej = np.eye(2)[j] * steps[j]
            H[i, j] = (div(ei + ej) - div(ei - ej) - div(-ei + ej) + div(-ei - ej)) / (4 * steps[i] * steps[j])
    return H


def _check_hessian_fisher(rng):
    worst = 0.0
    for _ in range(5):
        p = Gaussian(rng.normal(), rng.uniform(0.5, 2.0))
        for alpha in (0.5, 1.0, 2.0):
            worst = max(worst, _rel(renyi_hessian(p, alpha), alpha * fisher_information(p), floor=1e-3))
    return CheckResult("hessian_fisher", worst, 1e-3)


def _check_blm(rng):
    worst = 0.0
    for _ in range(20):
        X = rng.normal(size=(30, 3))
        y = X @ rng.normal(size=3) + rng.normal(size=30)
        model = blm_fit(X, y)
        x = rng.normal(size=3)
        s = blm_sensitivity(model, x)
        for d in range(3):
            worst = max(worst, _rel(blm_rsens_closed_form(model, x, d), rsens_local(s, d)))
    return CheckResult("blm_closed_form", worst, 1e-10)


def _check_location_shift(rng):
    worst = 0.0
    for _ in range(50):
        loc, shift = rng.normal(size=2) * 10
        v, nu = rng.uniform(0.1, 5), rng.uniform(1, 30)
        for a, b in ((Gaussian(loc, v), Gaussian(loc + shift, v)), (StudentT(loc, v, nu), StudentT(loc + shift, v, nu))):
            worst = max(worst, float(np.max(np.abs(fisher_information(a) - fisher_information(b)))))
    return CheckResult("fisher_location_invariance", worst, 0.0)


def _check_gp_derivatives(rng):
    X = rng.uniform(-2, 2, size=(25, 2))
    y = np.sin(X[:, 0]) + 0.5 * X[:, 1] + 0.1 * rng.normal(size=25)
    model = gp_fit(X, y, n_restarts=1)
    worst = 0.0
    h = 1e-3

    def fd(fn, x, e):
        # five-point central stencil
        return (-fn(x + 2 * e) + 8 * fn(x + e) - 8 * fn(x - e) + fn(x - 2 * e)) / (12 * h)

    def m(z):
        return latent_moments(model, z[None, :]).mean[0]

    def v(z):
        return latent_moments(model, z[None, :]).var[0]

    for x in rng.uniform(-1.5, 1.5, size=(5, 2)):
        mom = latent_moments(model, x[None, :], order=1)
        for d in range(2):
            e = np.eye(2)[d] * h
            worst = max(worst, _rel(mom.mean_grad[0, d], fd(m, x, e), 1e-3), _rel(mom.var_grad[0, d], fd(v, x, e), 1e-3))
    return CheckResult("gp_first_derivatives", worst, 1e-5)


def _check_kl_fd(rng):
    X = np.sort(rng.uniform(-2, 2, size=(30, 1)), axis=0)
    y = np.tanh(X[:, 0]) + 0.05 * rng.normal(size=30)
    model = gp_fit(X, y, n_restarts=1)
    worst = 0.0
    for x in rng.uniform(-1.5, 1.5, size=(10, 1)):
        ref = rsens_local(gp_predictive(model, x), 0)
        fd = kl_finite_difference(lambda z: gp_predict_dist(model, z), x, 0, 1e-4)
        worst = max(worst, abs(fd - ref) / max(ref, 1e-8))
    return CheckResult("kl_finite_difference", worst, 1e-3)


def run_checks(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [
        _check_hessian_fisher(rng),
        _check_blm(rng),
        _check_location_shift(rng),
        _check_gp_derivatives(rng),
        _check_kl_fd(rng),
    ]
