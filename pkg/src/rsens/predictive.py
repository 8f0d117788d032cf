"""Parametric predictive distributions, Fisher information and divergences.

Four families are supported, each with a fixed parameter ordering:

========= ==============================
Gaussian  (mean, variance)
StudentT  (location, sq_scale, dof)
Bernoulli (prob,)
Poisson   (rate,)
========= ==============================

All distribution objects are immutable; every function here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import integrate, special, stats

from .errors import (
    DomainError,
    QuadratureError,
    UndefinedDivergenceError,
    VariantMismatchError,
)

__all__ = [
    "Gaussian",
    "StudentT",
    "Bernoulli",
    "Poisson",
    "PredictiveDistribution",
    "fisher_information",
    "kl_divergence",
    "renyi_divergence",
    "log_density",
    "from_params",
]

QUAD_TOL = 1e-10
TAIL_TOL = 1e-12
KL_ALPHA_EPS = 1e-6
_MAX_DOUBLINGS = 64


def _check_finite(name, value):
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")


def _check_positive(name, value):
    _check_finite(name, value)
    if value <= 0:
        raise DomainError(f"{name} must be strictly positive, got {value!r}")


@dataclass(frozen=True)
class Gaussian:
    mean: float
    variance: float

    n_params = 2

    def __post_init__(self):
        _check_finite("mean", self.mean)
        _check_positive("variance", self.variance)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.mean, self.variance], dtype=float)


@dataclass(frozen=True)
class StudentT:
    """Location-scale Student-t; ``sq_scale`` is the squared scale, not the variance."""

    location: float
    sq_scale: float
    dof: float

    n_params = 3

    def __post_init__(self):
        _check_finite("location", self.location)
        _check_positive("sq_scale", self.sq_scale)
        _check_positive("dof", self.dof)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.location, self.sq_scale, self.dof], dtype=float)


@dataclass(frozen=True)
class Bernoulli:
    prob: float

    n_params = 1

    def __post_init__(self):
        _check_finite("prob", self.prob)
        if not 0.0 < self.prob < 1.0:
            raise DomainError(f"prob must lie strictly inside (0, 1), got {self.prob!r}")

    @property
    def params(self) -> np.ndarray:
        return np.array([self.prob], dtype=float)


@dataclass(frozen=True)
class Poisson:
    rate: float

    n_params = 1

    def __post_init__(self):
        _check_positive("rate", self.rate)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.rate], dtype=float)


PredictiveDistribution = Union[Gaussian, StudentT, Bernoulli, Poisson]


def from_params(family: type, params) -> PredictiveDistribution:
    """Build a distribution of ``family`` from its parameter vector."""
    params = [float(p) for p in np.atleast_1d(params)]
    if len(params) != family.n_params:
        raise DomainError(
            f"{family.__name__} takes {family.n_params} parameters, got {len(params)}"
        )
    return family(*params)


def log_density(dist: PredictiveDistribution, y):
    """Log density (or log mass) of ``dist`` at ``y``; vectorised over ``y``."""
    y = np.asarray(y, dtype=float)
    if isinstance(dist, Gaussian):
        return -0.5 * (np.log(2 * np.pi * dist.variance) + (y - dist.mean) ** 2 / dist.variance)
    if isinstance(dist, StudentT):
        nu, s2 = dist.dof, dist.sq_scale
        z2 = (y - dist.location) ** 2 / (nu * s2)
        return (
            special.gammaln((nu + 1) / 2)
            - special.gammaln(nu / 2)
            - 0.5 * np.log(nu * np.pi * s2)
            - (nu + 1) / 2 * np.log1p(z2)
        )
    if isinstance(dist, Bernoulli):
        return np.where(y == 1, np.log(dist.prob), np.log1p(-dist.prob))
    if isinstance(dist, Poisson):
        return stats.poisson.logpmf(y, dist.rate)
    raise TypeError(f"unsupported distribution {type(dist).__name__}")


def fisher_information(dist: PredictiveDistribution) -> np.ndarray:
    """Fisher information matrix of ``dist`` in its own parameter ordering.

    The Student-t matrix is expressed in (location, sq_scale, dof). The
    location/sq_scale block is what sensitivities use; the dof row and column
    are filled in for completeness.
    """
    if isinstance(dist, Gaussian):
        v = dist.variance
        return np.diag([1.0 / v, 1.0 / (2.0 * v * v)])
    if isinstance(dist, StudentT):
        nu, s2 = dist.dof, dist.sq_scale
        i_loc = (nu + 1) / ((nu + 3) * s2)
        i_scale = nu / (2 * (nu + 3) * s2 * s2)
        i_scale_dof = -1.0 / (s2 * (nu + 1) * (nu + 3))
        i_dof = 0.25 * (special.polygamma(1, nu / 2) - special.polygamma(1, (nu + 1) / 2)) - (
            nu + 5
        ) / (2 * nu * (nu + 1) * (nu + 3))
        return np.array(
            [
                [i_loc, 0.0, 0.0],
                [0.0, i_scale, i_scale_dof],
                [0.0, i_scale_dof, i_dof],
            ]
        )
    if isinstance(dist, Bernoulli):
        p = dist.prob
        return np.array([[1.0 / (p * (1.0 - p))]])
    if isinstance(dist, Poisson):
        return np.array([[1.0 / dist.rate]])
    raise TypeError(f"unsupported distribution {type(dist).__name__}")


def _same_family(p, q):
    if type(p) is not type(q):
        raise VariantMismatchError(
            f"divergence between {type(p).__name__} and {type(q).__name__} is not supported"
        )


def _integrate_real_line(fn: Callable[[float], float], center: float, scale: float) -> float:
    """Integrate ``fn`` over the real line.

    Adaptive Gauss-Kronrod on ``center +/- 50 * scale``; the window is then
    doubled until one doubling changes the result by less than QUAD_TOL.
    """
    half = 50.0 * scale
    total, _ = integrate.quad(fn, center - half, center + half, epsabs=QUAD_TOL, epsrel=0, limit=500)
    for _ in range(_MAX_DOUBLINGS):
        left, _ = integrate.quad(fn, center - 2 * half, center - half, epsabs=QUAD_TOL, epsrel=0, limit=500)
        right, _ = integrate.quad(fn, center + half, center + 2 * half, epsabs=QUAD_TOL, epsrel=0, limit=500)
        total += left + right
        half *= 2
        if abs(left + right) < QUAD_TOL:
            return total
    raise QuadratureError("real-line integral did not converge after window doubling")


def _t_window(p: StudentT, q: StudentT):
    center = 0.5 * (p.location + q.location)
    scale = max(math.sqrt(p.sq_scale), math.sqrt(q.sq_scale)) + 0.5 * abs(p.location - q.location)
    return center, scale


def _x_log_x_ratio_gauss(vp, vq):
    # 0.5 * (r - 1 - log r) with r = vp / vq, accurate for r near 1
    t = (vp - vq) / vq
    return 0.5 * (t - math.log1p(t))


def kl_divergence(p: PredictiveDistribution, q: PredictiveDistribution) -> float:
    """Kullback-Leibler divergence KL(p || q) between members of one family."""
    _same_family(p, q)
    if p == q:
        return 0.0
    if isinstance(p, Gaussian):
        return _x_log_x_ratio_gauss(p.variance, q.variance) + 0.5 * (p.mean - q.mean) ** 2 / q.variance
    if isinstance(p, Bernoulli):
        a, b = p.prob, q.prob
        return float(special.rel_entr(a, b) + special.rel_entr(1 - a, 1 - b))
    if isinstance(p, Poisson):
        lp, lq = p.rate, q.rate
        # lp*log(lp/lq) - lp + lq, written to avoid cancellation when lp ~ lq
        t = (lq - lp) / lp
        return lp * (t - math.log1p(t))
    if isinstance(p, StudentT):
        center, scale = _t_window(p, q)

        def integrand(y):
            lp = float(log_density(p, y))
            return math.exp(lp) * (lp - float(log_density(q, y)))

        return max(_integrate_real_line(integrand, center, scale), 0.0)
    raise TypeError(f"unsupported distribution {type(p).__name__}")


def _poisson_cutoff(*rates: float) -> int:
    """Smallest k at which the upper tail P(K > k) is below TAIL_TOL for every rate."""

    def small(k):
        return all(stats.poisson.sf(k, r) < TAIL_TOL for r in rates)

    lo = int(max(rates))
    hi = lo + 1
    while not small(hi):
        hi *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if small(mid):
            hi = mid
        else:
            lo = mid
    return hi


def renyi_divergence(p: PredictiveDistribution, q: PredictiveDistribution, alpha: float) -> float:
    """Renyi divergence of order ``alpha`` between two members of one family.

    For ``|alpha - 1| < 1e-6`` the KL divergence is returned instead of the
    limiting Renyi formula.
    """
    _same_family(p, q)
    if not (alpha > 0 and math.isfinite(alpha)):
        raise DomainError(f"alpha must be a positive finite number, got {alpha!r}")
    if abs(alpha - 1.0) < KL_ALPHA_EPS:
        return kl_divergence(p, q)
    if p == q:
        return 0.0

    if isinstance(p, Gaussian):
        v_mix = alpha * q.variance + (1 - alpha) * p.variance
        if v_mix <= 0:
            raise UndefinedDivergenceError(
                f"Gaussian Renyi divergence undefined: alpha*v_q + (1-alpha)*v_p = {v_mix} <= 0"
            )
        log_det = math.log(v_mix) - (1 - alpha) * math.log(p.variance) - alpha * math.log(q.variance)
        return alpha * (p.mean - q.mean) ** 2 / (2 * v_mix) - log_det / (2 * (alpha - 1))

    if isinstance(p, Bernoulli):
        logs = np.array(
            [
                alpha * math.log(p.prob) + (1 - alpha) * math.log(q.prob),
                alpha * math.log1p(-p.prob) + (1 - alpha) * math.log1p(-q.prob),
            ]
        )
        return max(float(special.logsumexp(logs)) / (alpha - 1), 0.0)

    if isinstance(p, Poisson):
        # the summand is proportional to a Poisson pmf with this tilted rate
        tilted = math.exp(alpha * math.log(p.rate) + (1 - alpha) * math.log(q.rate))
        k = np.arange(_poisson_cutoff(p.rate, q.rate, tilted) + 1)
        logs = alpha * stats.poisson.logpmf(k, p.rate) + (1 - alpha) * stats.poisson.logpmf(k, q.rate)
        return max(float(special.logsumexp(logs)) / (alpha - 1), 0.0)

    if isinstance(p, StudentT):
        center, scale = _t_window(p, q)

        def integrand(y):
            return math.exp(alpha * float(log_density(p, y)) + (1 - alpha) * float(log_density(q, y)))

        mass = _integrate_real_line(integrand, center, scale)
        if mass <= 0:
            raise QuadratureError("non-positive Renyi integral")
        return max(math.log(mass) / (alpha - 1), 0.0)

    raise TypeError(f"unsupported distribution {type(p).__name__}")
