"""Reference importance measures: derivative/Hessian averages, variance of
the predictive mean, partial dependence, permutation importance and the
Friedman-Popescu H-statistic.

Functions taking a ``PredictFn`` only use its vectorised ``mean`` (rows of
an (n, D) array in, (n,) out); permutation importance also needs
``log_density``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DataError
from .predictive import log_density as _dist_log_density

__all__ = [
    "PredictFn",
    "expected_derivative_importance",
    "expected_hessian_importance",
    "var_importance",
    "pd_importance",
    "pfi",
    "h_statistic",
]


@dataclass(frozen=True)
class PredictFn:
    mean: Callable[[np.ndarray], np.ndarray]
    distribution: Callable | None = None
    log_density: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def lpd(self, X, y) -> np.ndarray:
        if self.log_density is not None:
            return np.asarray(self.log_density(X, y), dtype=float)
        if self.distribution is None:
            raise DataError("log predictive density needs a distribution or log_density")
        return np.array([float(_dist_log_density(self.distribution(x), t)) for x, t in zip(X, y)])


def _as_mean(predict) -> Callable:
    return predict.mean if isinstance(predict, PredictFn) else predict


def expected_derivative_importance(grads: Sequence[float], mode: str = "EAD") -> float:
    """EAD = mean |g_i|; AED = |mean g_i|."""
    g = np.asarray(grads, dtype=float)
    if g.size == 0:
        raise DataError("no derivative values")
    mode = mode.upper()
    if mode == "EAD":
        return float(np.mean(np.abs(g)))
    if mode == "AED":
        return float(abs(np.mean(g)))
    raise ValueError(f"unknown mode {mode!r}")


def expected_hessian_importance(hessians: Sequence[float], mode: str = "EAH") -> float:
    """EAH = mean |h_i|; AEH = |mean h_i| over mixed second derivatives."""
    h = np.asarray(hessians, dtype=float)
    if h.size == 0:
        raise DataError("no Hessian values")
    mode = mode.upper()
    if mode == "EAH":
        return float(np.mean(np.abs(h)))
    if mode == "AEH":
        return float(abs(np.mean(h)))
    raise ValueError(f"unknown mode {mode!r}")


def _batched(mean, rows: np.ndarray, chunk: int = 20000) -> np.ndarray:
    if rows.shape[0] <= chunk:
        return np.asarray(mean(rows), dtype=float)
    return np.concatenate([np.asarray(mean(rows[i : i + chunk]), dtype=float) for i in range(0, rows.shape[0], chunk)])


def var_importance(predict, X, d: int) -> float:
    """Variance of the predictive mean along x_d, averaged over observations.

    For every observation i the mean is evaluated with x_d replaced by each
    observed value x_jd (other coordinates kept at observation i's values);
    the empirical variance over j is then averaged over i.
    """
    mean = _as_mean(predict)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N = X.shape[0]
    if N < 2:
        raise DataError("variance importance needs at least two observations")
    block = max(1, 200_000 // N)
    total = 0.0
    for start in range(0, N, block):
        Xi = X[start : start + block]
        rows = np.repeat(Xi, N, axis=0)
        rows[:, d] = np.tile(X[:, d], Xi.shape[0])
        vals = _batched(mean, rows).reshape(Xi.shape[0], N)
        total += float(np.var(vals, axis=1).sum())
    return total / N


def _pd_grid(X, d, grid_size):
    return np.linspace(X[:, d].min(), X[:, d].max(), grid_size)


def _pd_curve(mean, X, dims, values) -> np.ndarray:
    """Partial dependence at each row of ``values`` (one column per dim)."""
    N = X.shape[0]
    G = values.shape[0]
    rows = np.tile(X, (G, 1))
    for j, d in enumerate(dims):
        rows[:, d] = np.repeat(values[:, j], N)
    return _batched(mean, rows).reshape(G, N).mean(axis=1)


def pd_importance(predict, X, dims, grid_size: int = 10) -> float:
    """Partial-dependence importance.

    For one feature: population SD over an equispaced grid (min to max of
    x_d) of the partial-dependence function. For a pair (d, e): the
    interaction statistic averaging SD_e[SD_d PD(v_d, v_e)] and its mirror
    image, which vanishes for additive functions.
    """
    mean = _as_mean(predict)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise DataError("empty data")
    if grid_size < 2:
        raise DataError("grid_size must be at least 2")
    dims = (dims,) if np.isscalar(dims) else tuple(dims)
    if len(dims) == 1:
        grid = _pd_grid(X, dims[0], grid_size)
        return float(np.std(_pd_curve(mean, X, dims, grid[:, None])))
    d, e = dims
    gd, ge = _pd_grid(X, d, grid_size), _pd_grid(X, e, grid_size)
    vd, ve = np.meshgrid(gd, ge, indexing="ij")
    pd = _pd_curve(mean, X, (d, e), np.column_stack([vd.ravel(), ve.ravel()])).reshape(grid_size, grid_size)
    d_given_e = np.std(np.std(pd, axis=0))
    e_given_d = np.std(np.std(pd, axis=1))
    return float(0.5 * (d_given_e + e_given_d))


def pfi(predict: PredictFn, X, y, d: int, n_permutations: int = 1, seed: int = 0, permutation=None) -> float:
    """Permutation feature importance with log predictive density as utility.

    Returns the mean drop in mean log predictive density when column ``d`` is
    permuted. ``permutation`` forces a specific row order (one replicate).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    N = X.shape[0]
    if N < 2:
        raise DataError("permutation importance needs at least two observations")
    base = float(np.mean(predict.lpd(X, y)))
    rng = np.random.default_rng(seed)
    perms = [np.asarray(permutation)] if permutation is not None else [rng.permutation(N) for _ in range(n_permutations)]
    drops = []
    for perm in perms:
        Xp = X.copy()
        Xp[:, d] = X[perm, d]
        drops.append(base - float(np.mean(predict.lpd(Xp, y))))
    return float(np.mean(drops))


def _pd_at_data(mean, X, dims):
    vals = _pd_curve(mean, X, dims, X[:, list(dims)])
    centre = vals.mean()
    return vals - centre, centre


def h_statistic(predict, X, d: int, e: int, return_flag: bool = False):
    """Friedman-Popescu H for the pair (d, e), in [0, 1].

    Partial dependences are evaluated at the observed points and centred.
    A zero denominator yields H = 0 and sets the degeneracy flag.
    """
    mean = _as_mean(predict)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 2:
        raise DataError("H-statistic needs at least two observations")
    pd_de, level = _pd_at_data(mean, X, (d, e))
    pd_d, _ = _pd_at_data(mean, X, (d,))
    pd_e, _ = _pd_at_data(mean, X, (e,))
    denom = float(np.sum(pd_de**2))
    # centred PD indistinguishable from round-off of the prediction level
    degenerate = math.sqrt(denom / len(pd_de)) <= 1e-12 * (1.0 + abs(level))
    if degenerate:
        warnings.warn(f"H-statistic denominator is zero for pair ({d}, {e}); returning 0", RuntimeWarning)
        h = 0.0
    else:
        h = math.sqrt(min(float(np.sum((pd_de - (pd_d + pd_e)) ** 2)) / denom, 1.0))
    return (h, degenerate) if return_flag else h
