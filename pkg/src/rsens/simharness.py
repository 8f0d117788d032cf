"""Simulation harness: synthetic main-effect and interaction data, oracle
predictive models, ranking metrics, cross-validated MLPD of interaction
models and bootstrap stability of pair rankings.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import linalg

from .baselines import (
    PredictFn,
    expected_derivative_importance,
    expected_hessian_importance,
    h_statistic,
    pd_importance,
    pfi,
    var_importance,
)
from .data import Dataset
from .errors import DataError, RsensError
from .gp import (
    AdditiveEQKernel,
    EQKernelParams,
    gp_fit,
    gp_predictive_batch,
    log_predictive_density,
    predictive_mean,
    predictive_params,
)
from .predictive import Gaussian
from .sensitivity import ParamSensitivity, rank_features, rsens2_all, rsens_all

log = logging.getLogger(__name__)

__all__ = [
    "SHAPES",
    "PREDICTOR_DISTS",
    "FEATURE_METHODS",
    "PAIR_METHODS",
    "MainEffectConfig",
    "OracleModel",
    "InteractionConfig",
    "gen_main_effect_data",
    "sample_predictors",
    "make_oracle",
    "oracle_predict",
    "ranking_error",
    "main_effect_scores",
    "run_main_effect_experiment",
    "gen_interaction_data",
    "scale_by_max",
    "gp_feature_scores",
    "gp_pair_scores",
    "run_interaction_experiment",
    "cv_mlpd_experiment",
    "ranking_entropy",
    "bootstrap_entropy",
    "summarize",
    "worker_count",
]


# (f, f', f'') for each effect shape
SHAPES: dict[str, tuple[Callable, Callable, Callable]] = {
    "x": (lambda x: x, lambda x: np.ones_like(x), lambda x: np.zeros_like(x)),
    "x^3": (lambda x: x**3, lambda x: 3 * x**2, lambda x: 6 * x),
    "x+cos3x": (
        lambda x: x + np.cos(3 * x),
        lambda x: 1 - 3 * np.sin(3 * x),
        lambda x: -9 * np.cos(3 * x),
    ),
    "sin3x": (lambda x: np.sin(3 * x), lambda x: 3 * np.cos(3 * x), lambda x: -9 * np.sin(3 * x)),
    "x*exp(-x)": (
        lambda x: x * np.exp(-x),
        lambda x: (1 - x) * np.exp(-x),
        lambda x: (x - 2) * np.exp(-x),
    ),
    "exp(-x^2)": (
        lambda x: np.exp(-x * x),
        lambda x: -2 * x * np.exp(-x * x),
        lambda x: (4 * x * x - 2) * np.exp(-x * x),
    ),
}
SHAPE_ORDER = ("x", "x^3", "x+cos3x", "sin3x", "x*exp(-x)", "exp(-x^2)")

PREDICTOR_DISTS = ("StudentT3", "StdNormal", "GaussMixture2", "CorrelatedGauss")
MIXTURE_MEANS = (-1.5, 1.5)
MIXTURE_SD = 0.5
CORRELATION = 0.8
BIAS_SD = 0.02

FEATURE_METHODS = ("rsens", "EAD", "AED", "PD", "PFI", "VAR")
PAIR_METHODS = ("rsens2", "EAH", "AEH", "PD", "HS")
_CANON = {m.lower(): m for m in FEATURE_METHODS + PAIR_METHODS}


def _canon(methods, allowed) -> list:
    out = []
    for m in methods:
        c = _CANON.get(str(m).lower())
        if c is None or c not in allowed:
            raise DataError(f"unknown method {m!r}; expected one of {list(allowed)}")
        out.append(c)
    return out


def worker_count() -> int:
    """Worker processes for replications, capped by RSENS_THREADS (default 1)."""
    raw = os.environ.get("RSENS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise DataError(f"RSENS_THREADS must be an integer, got {raw!r}") from None
    return max(1, min(n, os.cpu_count() or 1))


def _pmap(fn, tasks, workers=None) -> list:
    """Ordered map; uses a process pool when more than one worker is allowed."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def summarize(values) -> tuple[float, float, float]:
    """(mean, standard error, 95% half-width = 1.96 SE) of a sample."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan"), float("nan")
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(np.mean(v)), se, 1.96 * se


# ---------------------------------------------------------------------------
# main-effect data and oracle models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MainEffectConfig:
    n: int = 200
    d: int = 10
    shape: str = "x"
    amplitudes: tuple | None = None
    predictor_dist: str = "StudentT3"
    noise_sd: float = 1.0
    var_const: float | None = None
    var_slope: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise DataError(f"unknown shape {self.shape!r}; expected one of {list(SHAPES)}")
        if self.predictor_dist not in PREDICTOR_DISTS:
            raise DataError(f"unknown predictor distribution {self.predictor_dist!r}")
        if self.n < 2 or self.d < 1:
            raise DataError("need n >= 2 and d >= 1")
        if self.noise_sd < 0:
            raise DataError("noise_sd must be non-negative")
        amps = tuple(float(a) for a in range(1, self.d + 1)) if self.amplitudes is None else tuple(
            float(a) for a in self.amplitudes
        )
        if len(amps) != self.d:
            raise DataError(f"need {self.d} amplitudes, got {len(amps)}")
        if any(b <= a for a, b in zip(amps, amps[1:])):
            raise DataError("amplitudes must be strictly increasing")
        object.__setattr__(self, "amplitudes", amps)
        if self.variance_constants[0] <= 0:
            raise DataError("oracle variance constant must be positive")

    @property
    def variance_constants(self) -> tuple[float, float]:
        """(c0, c1) of the oracle variance c0 + c1 ||x - xbar||^2."""
        s2 = self.noise_sd**2
        c0 = s2 if self.var_const is None else float(self.var_const)
        c1 = s2 / self.d if self.var_slope is None else float(self.var_slope)
        return c0, c1

    def true_ranks(self) -> dict:
        # larger amplitude = more important; feature d (0-based) has rank D - d
        return {d: self.d - d for d in range(self.d)}


def sample_predictors(dist: str, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    if dist == "StudentT3":
        return rng.standard_t(3, size=(n, d))
    if dist == "StdNormal":
        return rng.standard_normal((n, d))
    if dist == "GaussMixture2":
        comp = rng.integers(0, 2, size=(n, d))
        return np.asarray(MIXTURE_MEANS)[comp] + MIXTURE_SD * rng.standard_normal((n, d))
    if dist == "CorrelatedGauss":
        common = rng.standard_normal((n, 1))
        return math.sqrt(CORRELATION) * common + math.sqrt(1 - CORRELATION) * rng.standard_normal((n, d))
    raise DataError(f"unknown predictor distribution {dist!r}")


def gen_main_effect_data(cfg: MainEffectConfig, rng: np.random.Generator | None = None):
    """Draw ``(Dataset, true_ranks)`` with y = sum_d A_d f(x_d) + noise."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    X = sample_predictors(cfg.predictor_dist, cfg.n, cfg.d, rng)
    f = SHAPES[cfg.shape][0]
    y = f(X) @ np.asarray(cfg.amplitudes) + cfg.noise_sd * rng.standard_normal(cfg.n)
    names = tuple(f"x{d + 1}" for d in range(cfg.d))
    return Dataset(X, y, names), cfg.true_ranks()


@dataclass(frozen=True)
class OracleModel:
    """Known mean function with a Gaussian predictive whose variance grows
    quadratically with distance from ``center``.

    With ``bias`` set, term d of the mean is multiplied by |bias_d| |x_d|^3 + 1.
    """

    shape: str
    amplitudes: np.ndarray
    center: np.ndarray
    var_const: float
    var_slope: float
    bias: np.ndarray | None = None

    def __post_init__(self):
        if self.var_const <= 0 or self.var_slope < 0:
            raise DataError("oracle variance must be positive everywhere")
        object.__setattr__(self, "amplitudes", np.asarray(self.amplitudes, dtype=float))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.bias is not None:
            object.__setattr__(self, "bias", np.abs(np.asarray(self.bias, dtype=float)))

    def bias_factor(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.bias is None:
            return np.ones_like(X)
        return self.bias * np.abs(X) ** 3 + 1.0

    def mean(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        f = SHAPES[self.shape][0]
        return (f(X) * self.bias_factor(X)) @ self.amplitudes

    def mean_grad(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        f, df, _ = SHAPES[self.shape]
        g = df(X) * self.bias_factor(X)
        if self.bias is not None:
            g = g + f(X) * 3 * self.bias * X * np.abs(X)
        return g * self.amplitudes

    def var(self, X) -> np.ndarray:
        U = np.atleast_2d(np.asarray(X, dtype=float)) - self.center
        return self.var_const + self.var_slope * np.sum(U * U, axis=1)

    def var_grad(self, X) -> np.ndarray:
        return 2 * self.var_slope * (np.atleast_2d(np.asarray(X, dtype=float)) - self.center)

    def log_density(self, X, y) -> np.ndarray:
        m, v = self.mean(X), self.var(X)
        return -0.5 * (np.log(2 * np.pi * v) + (np.asarray(y) - m) ** 2 / v)

    def predict_fn(self) -> PredictFn:
        return PredictFn(mean=self.mean, log_density=self.log_density)


def make_oracle(cfg: MainEffectConfig, X, biased: bool = False, rng: np.random.Generator | None = None) -> OracleModel:
    """Ground-truth (or biased) oracle centred at the sample mean of ``X``."""
    c0, c1 = cfg.variance_constants
    bias = None
    if biased:
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        bias = rng.normal(0.0, BIAS_SD, size=cfg.d)
    return OracleModel(cfg.shape, np.asarray(cfg.amplitudes), np.mean(X, axis=0), c0, c1, bias)


def oracle_predict(model: OracleModel, x) -> ParamSensitivity:
    """Gaussian predictive at ``x`` with analytic (mean, variance) gradients."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    grad = np.column_stack([model.mean_grad(x)[0], model.var_grad(x)[0]])
    return ParamSensitivity(Gaussian(float(model.mean(x)[0]), float(model.var(x)[0])), grad)


def ranking_error(estimated, true_ranks: Mapping) -> float:
    """Mean absolute difference between estimated and true ranks."""
    ranks = estimated.ranks if hasattr(estimated, "ranks") else estimated
    if set(ranks) != set(true_ranks):
        raise DataError("estimated and true rankings have different keys")
    return float(np.mean([abs(ranks[k] - true_ranks[k]) for k in true_ranks]))


def main_effect_scores(model: OracleModel, X, y, methods, seed: int = 0) -> dict:
    """Global importance of every feature under each method, for an oracle."""
    methods = _canon(methods, FEATURE_METHODS)
    X = np.atleast_2d(X)
    D = X.shape[1]
    pf = model.predict_fn()
    out = {}
    grads = model.mean_grad(X) if {"EAD", "AED"} & set(methods) else None
    for m in methods:
        if m == "rsens":
            local = np.array([rsens_all(oracle_predict(model, x)) for x in X])
            out[m] = {d: float(np.mean(local[:, d])) for d in range(D)}
        elif m in ("EAD", "AED"):
            out[m] = {d: expected_derivative_importance(grads[:, d], m) for d in range(D)}
        elif m == "PD":
            out[m] = {d: pd_importance(pf, X, d) for d in range(D)}
        elif m == "PFI":
            out[m] = {d: pfi(pf, X, y, d, seed=seed + d) for d in range(D)}
        elif m == "VAR":
            out[m] = {d: var_importance(pf, X, d) for d in range(D)}
    return out


@dataclass
class ExperimentTable:
    """Summary rows plus the raw per-replication values behind them."""

    rows: list
    raw: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def row(self, **match) -> dict:
        hits = [r for r in self.rows if all(r.get(k) == v for k, v in match.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {match}")
        return hits[0]


def _main_effect_rep(task):
    cfg, methods, rep, seed, models = task
    rng = np.random.default_rng([seed, rep])
    data, truth = gen_main_effect_data(cfg, rng)
    out = {}
    for kind in models:
        oracle = make_oracle(cfg, data.X, biased=(kind == "imperfect"), rng=rng)
        scores = main_effect_scores(oracle, data.X, data.y, methods, seed=int(rng.integers(2**31)))
        errs = {m: ranking_error(rank_features(s, m), truth) for m, s in scores.items()}
        out[kind] = {m: errs[m] - errs["rsens"] for m in methods}
    return out


def run_main_effect_experiment(
    cfg: MainEffectConfig,
    methods: Sequence[str] = FEATURE_METHODS,
    replications: int = 20,
    seed: int = 0,
    models: Sequence[str] = ("ground_truth", "imperfect"),
    workers: int | None = None,
) -> ExperimentTable:
    """Comparative ranking error (method minus R-sens) over replications.

    Each replication draws fresh data from ``np.random.default_rng([seed, rep])``;
    the imperfect oracle's bias coefficients come from the same stream.
    """
    methods = _canon(methods, FEATURE_METHODS)
    if "rsens" not in methods:
        raise DataError("methods must include rsens as the reference")
    for kind in models:
        if kind not in ("ground_truth", "imperfect"):
            raise DataError(f"unknown oracle kind {kind!r}")
    if replications < 1:
        raise DataError("need at least one replication")
    tasks = [(cfg, methods, rep, seed, tuple(models)) for rep in range(replications)]
    results = _pmap(_main_effect_rep, tasks, workers)
    rows, raw = [], {}
    for kind in models:
        for m in methods:
            vals = np.array([r[kind][m] for r in results])
            raw[(kind, m)] = vals
            mean, se, hw = summarize(vals)
            rows.append({"model": kind, "method": m, "mean": mean, "stderr": se, "halfwidth": hw, "n": len(vals)})
    return ExperimentTable(rows, raw)


# ---------------------------------------------------------------------------
# GP-based importances
# ---------------------------------------------------------------------------


def _all_pairs(D):
    return [(d, e) for d in range(D) for e in range(d + 1, D)]


def gp_feature_scores(model, X, y, methods, alpha: float = 1.0, seed: int = 0) -> dict:
    """Global feature importances of a fitted GP under each method."""
    methods = _canon(methods, FEATURE_METHODS)
    X = np.atleast_2d(X)
    D = X.shape[1]
    pf = PredictFn(mean=lambda Z: predictive_mean(model, Z), log_density=lambda Z, t: log_predictive_density(model, Z, t))
    out = {}
    if "rsens" in methods:
        local = np.array([rsens_all(s, alpha) for s in gp_predictive_batch(model, X, order=1)])
        out["rsens"] = {d: float(np.mean(local[:, d])) for d in range(D)}
    if {"EAD", "AED"} & set(methods):
        _, grads, _ = predictive_params(model, X, order=1)
        for m in ("EAD", "AED"):
            if m in methods:
                out[m] = {d: expected_derivative_importance(grads[:, d, 0], m) for d in range(D)}
    for m in methods:
        if m == "PD":
            out[m] = {d: pd_importance(pf, X, d) for d in range(D)}
        elif m == "PFI":
            out[m] = {d: pfi(pf, X, y, d, seed=seed + d) for d in range(D)}
        elif m == "VAR":
            out[m] = {d: var_importance(pf, X, d) for d in range(D)}
    return {m: out[m] for m in methods}


def gp_pair_scores(model, X, methods, alpha: float = 1.0, pairs=None) -> dict:
    """Global pairwise-interaction importances of a fitted GP."""
    methods = _canon(methods, PAIR_METHODS)
    X = np.atleast_2d(X)
    pairs = _all_pairs(X.shape[1]) if pairs is None else [tuple(p) for p in pairs]
    out = {}
    if "rsens2" in methods:
        local = [rsens2_all(s, alpha) for s in gp_predictive_batch(model, X, order=2, pairs=pairs)]
        out["rsens2"] = {p: float(np.mean([l[p] for l in local])) for p in pairs}
    if {"EAH", "AEH"} & set(methods):
        _, _, hess = predictive_params(model, X, order=2)
        for m in ("EAH", "AEH"):
            if m in methods:
                out[m] = {(d, e): expected_hessian_importance(hess[:, d, e, 0], m) for d, e in pairs}
    pf = PredictFn(mean=lambda Z: predictive_mean(model, Z))
    if "PD" in methods:
        out["PD"] = {p: pd_importance(pf, X, p) for p in pairs}
    if "HS" in methods:
        out["HS"] = {(d, e): h_statistic(pf, X, d, e) for d, e in pairs}
    return {m: out[m] for m in methods}


def scale_by_max(scores: Mapping) -> dict:
    """Divide by the largest score; all-equal (including all-zero) maps to 1."""
    vals = np.array(list(scores.values()), dtype=float)
    top = float(vals.max())
    if np.all(vals == vals[0]) or top <= 0:
        return {k: 1.0 for k in scores}
    return {k: float(v) / top for k, v in scores.items()}


# ---------------------------------------------------------------------------
# interaction experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InteractionConfig:
    """Twelve standard-normal predictors; the first ``len(main_shapes)``
    carry main effects A_k f_k(x_k), and each pair in ``interaction_pairs``
    adds ``interaction_strength * x_d * x_e``."""

    n_values: tuple = (50, 100, 200, 300)
    d: int = 12
    main_shapes: tuple = SHAPE_ORDER + SHAPE_ORDER[:2]
    main_amplitudes: tuple = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
    interaction_pairs: tuple = ((8, 9), (0, 10), (1, 2))
    false_pairs: tuple = ((10, 11), (5, 11), (3, 4))
    interaction_strength: float = 1.0
    noise_sd: float = 0.5
    replications: int = 50
    methods: tuple = PAIR_METHODS
    model: str = "gp"
    n_restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if len(self.main_shapes) != len(self.main_amplitudes):
            raise DataError("one amplitude per main effect")
        if len(self.main_shapes) > self.d:
            raise DataError("more main effects than predictors")
        for s in self.main_shapes:
            if s not in SHAPES:
                raise DataError(f"unknown shape {s!r}")
        if len(self.interaction_pairs) != 3 or len(self.false_pairs) != 3:
            raise DataError("exactly three true and three false pairs are required")
        n_main = [sum(self.has_main(i) for i in p) for p in self.interaction_pairs]
        if n_main != [0, 1, 2]:
            raise DataError("true pairs must have 0, 1 and 2 main-effect predictors, in that order")
        true = {tuple(sorted(p)) for p in self.interaction_pairs}
        if any(tuple(sorted(p)) in true for p in self.false_pairs):
            raise DataError("false pairs must not be true pairs")
        if self.model not in ("gp", "oracle"):
            raise DataError("model must be 'gp' or 'oracle'")
        if any(n < 2 for n in self.n_values):
            raise DataError("sample sizes must be at least 2")
        _canon(self.methods, PAIR_METHODS)

    def has_main(self, i: int) -> bool:
        return i < len(self.main_shapes)

    def pair_structure(self, pair) -> str:
        return ("none", "one", "both")[sum(self.has_main(i) for i in pair)]


def _interaction_mean(cfg: InteractionConfig, X) -> np.ndarray:
    X = np.atleast_2d(X)
    out = np.zeros(X.shape[0])
    for k, (s, a) in enumerate(zip(cfg.main_shapes, cfg.main_amplitudes)):
        out += a * SHAPES[s][0](X[:, k])
    for d, e in cfg.interaction_pairs:
        out += cfg.interaction_strength * X[:, d] * X[:, e]
    return out


def _interaction_mean_hess(cfg: InteractionConfig, X) -> np.ndarray:
    X = np.atleast_2d(X)
    H = np.zeros((X.shape[0], cfg.d, cfg.d))
    for k, (s, a) in enumerate(zip(cfg.main_shapes, cfg.main_amplitudes)):
        H[:, k, k] = a * SHAPES[s][2](X[:, k])
    for d, e in cfg.interaction_pairs:
        H[:, d, e] += cfg.interaction_strength
        H[:, e, d] += cfg.interaction_strength
    return H


def gen_interaction_data(cfg: InteractionConfig, n: int, rng: np.random.Generator) -> Dataset:
    X = rng.standard_normal((n, cfg.d))
    y = _interaction_mean(cfg, X) + cfg.noise_sd * rng.standard_normal(n)
    return Dataset(X, y, tuple(f"x{d + 1}" for d in range(cfg.d)))


def _oracle_pair_scores(cfg: InteractionConfig, X, methods) -> dict:
    """Pair importances using the exact mean, its Hessian and a constant
    predictive variance equal to the noise variance."""
    pairs = _all_pairs(cfg.d)
    H = _interaction_mean_hess(cfg, X)
    var = max(cfg.noise_sd**2, 1e-12)
    pf = PredictFn(mean=lambda Z: _interaction_mean(cfg, Z))
    out = {}
    for m in _canon(methods, PAIR_METHODS):
        if m == "rsens2":
            out[m] = {(d, e): float(np.mean(np.abs(H[:, d, e]))) / math.sqrt(var) for d, e in pairs}
        elif m in ("EAH", "AEH"):
            out[m] = {(d, e): expected_hessian_importance(H[:, d, e], m) for d, e in pairs}
        elif m == "PD":
            out[m] = {p: pd_importance(pf, X, p) for p in pairs}
        else:
            out[m] = {(d, e): h_statistic(pf, X, d, e) for d, e in pairs}
    return out


def _interaction_rep(task):
    cfg, n, rep = task
    rng = np.random.default_rng([cfg.seed, n, rep])
    data = gen_interaction_data(cfg, n, rng)
    if cfg.model == "oracle":
        scores = _oracle_pair_scores(cfg, data.X, cfg.methods)
    else:
        model = gp_fit(data.X, data.y, n_restarts=cfg.n_restarts, seed=int(rng.integers(2**31)))
        scores = gp_pair_scores(model, data.X, cfg.methods)
    return {m: scale_by_max(s) for m, s in scores.items()}


def run_interaction_experiment(cfg: InteractionConfig, workers: int | None = None) -> ExperimentTable:
    """Mean max-scaled importance of the true and false pairs for each N and method."""
    methods = _canon(cfg.methods, PAIR_METHODS)
    tasks = [(cfg, n, rep) for n in cfg.n_values for rep in range(cfg.replications)]
    results = _pmap(_interaction_rep, tasks, workers)
    rows, raw = [], {}
    labelled = [(tuple(sorted(p)), "true") for p in cfg.interaction_pairs]
    labelled += [(tuple(sorted(p)), "false") for p in cfg.false_pairs]
    for n in cfg.n_values:
        reps = [r for (_, tn, _), r in zip(tasks, results) if tn == n]
        for m in methods:
            for pair, kind in labelled:
                vals = np.array([r[m][pair] for r in reps])
                raw[(n, m, pair)] = vals
                mean, se, hw = summarize(vals)
                rows.append({
                    "n": n, "method": m, "pair": pair, "kind": kind,
                    "structure": cfg.pair_structure(pair),
                    "mean": mean, "stderr": se, "halfwidth": hw,
                })
    return ExperimentTable(rows, raw)


# ---------------------------------------------------------------------------
# cross-validated MLPD of restricted-interaction models
# ---------------------------------------------------------------------------


def _fit_structured(X, y, likelihood, groups, n_restarts, seed):
    D = X.shape[1]
    if groups is None:
        kernel = EQKernelParams(float(np.var(y)) if likelihood == "gaussian" else 1.0, (1.0,) * D)
    else:
        sv = (float(np.var(y)) if likelihood == "gaussian" else 1.0) / len(groups)
        kernel = AdditiveEQKernel.build(D, groups, signal_var=max(sv, 1e-6))
    return gp_fit(X, y, likelihood=likelihood, kernel=kernel, n_restarts=n_restarts, seed=seed)


def _cv_split(task):
    data, train, test, methods, counts, n_restarts, seed, split = task
    Xtr, ytr = data.X[train], data.y[train]
    Xte, yte = data.X[test], data.y[test]
    lik = data.likelihood
    records = []
    full = _fit_structured(Xtr, ytr, lik, None, n_restarts, seed)
    full_mlpd = float(np.mean(log_predictive_density(full, Xte, yte)))
    records.append({"split": split, "method": "full", "count": -1, "mlpd": full_mlpd, "pairs": "all"})
    scores = gp_pair_scores(full, Xtr, methods)
    singles = [(d,) for d in range(data.n_features)]
    cache = {}
    for m in methods:
        order = rank_features(scores[m], m).ordered()
        for k in counts:
            chosen = tuple(order[:k])
            key = frozenset(chosen)
            if key not in cache:
                model = _fit_structured(Xtr, ytr, lik, singles + list(chosen), n_restarts, seed)
                cache[key] = float(np.mean(log_predictive_density(model, Xte, yte)))
            records.append({
                "split": split, "method": m, "count": k, "mlpd": cache[key],
                "pairs": ";".join(f"{d}-{e}" for d, e in chosen),
            })
    return records


def _cv_split_safe(task):
    try:
        return _cv_split(task), None
    except (RsensError, linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        return [], f"split {task[-1]}: {type(exc).__name__}: {exc}"


def cv_mlpd_experiment(
    data: Dataset,
    methods: Sequence[str] = PAIR_METHODS,
    interaction_counts: Sequence[int] = range(6),
    n_splits: int = 10,
    train_size: int = 80,
    seed: int = 0,
    n_restarts: int = 2,
    workers: int | None = None,
) -> ExperimentTable:
    """MLPD of additive GPs with the top-k pairs of each method, over random splits.

    For every split the full EQ GP is fitted on the training rows, pairs are
    ranked by each method, and an additive GP (one EQ term per predictor plus
    one 2-D EQ term per chosen pair) is refitted for each k. The full model's
    MLPD is reported under method ``"full"`` with count -1. Splits whose fits
    fail are logged, dropped and counted in ``meta["failed"]``.
    """
    methods = _canon(methods, PAIR_METHODS)
    counts = sorted({int(k) for k in interaction_counts})
    n_pairs = data.n_features * (data.n_features - 1) // 2
    if counts[0] < 0 or counts[-1] > n_pairs:
        raise DataError(f"interaction counts must lie in [0, {n_pairs}]")
    if not 2 <= train_size < data.n:
        raise DataError(f"train_size must be in [2, {data.n - 1}]")
    rng = np.random.default_rng(seed)
    tasks = []
    for split in range(n_splits):
        perm = rng.permutation(data.n)
        tasks.append((data, perm[:train_size], perm[train_size:], methods, counts, n_restarts,
                      int(rng.integers(2**31)), split))
    outcomes = _pmap(_cv_split_safe, tasks, workers)
    records, failed = [], []
    for recs, err in outcomes:
        if err is not None:
            log.warning("cv %s", err)
            failed.append(err)
        records.extend(recs)
    rows = []
    for m, k in [("full", -1)] + [(m, k) for m in methods for k in counts]:
        vals = [r["mlpd"] for r in records if r["method"] == m and r["count"] == k]
        mean, se, hw = summarize(vals)
        rows.append({"method": m, "count": k, "mean": mean, "stderr": se, "halfwidth": hw, "n": len(vals)})
    return ExperimentTable(rows, {"records": records}, {"failed": failed, "n_splits": n_splits})


# ---------------------------------------------------------------------------
# ranking stability
# ---------------------------------------------------------------------------


def ranking_entropy(rankings: Sequence[Sequence], top_k: int) -> float:
    """Average over positions 1..top_k of the Shannon entropy (nats) of
    which key occupies that position across ``rankings``."""
    if len(rankings) < 2:
        raise DataError("need at least two rankings")
    if top_k < 1 or any(len(r) < top_k for r in rankings):
        raise DataError("top_k must be between 1 and the ranking length")
    ents = []
    for pos in range(top_k):
        _, counts = np.unique(np.array([repr(r[pos]) for r in rankings]), return_counts=True)
        p = counts / counts.sum()
        ents.append(float(-np.sum(p * np.log(p))))
    return float(np.mean(ents))


def bootstrap_entropy(
    data: Dataset,
    method: str = "rsens2",
    n_boot: int = 100,
    top_k: int = 5,
    seed: int = 0,
    rank_fn: Callable | None = None,
    n_restarts: int = 1,
) -> float:
    """Entropy of pair rankings across bootstrap resamples of the rows.

    ``rank_fn(X, y)`` returning keys from most to least important replaces
    the default (fit an EQ GP, rank all pairs by ``method``).
    """
    if n_boot < 2:
        raise DataError("need at least two bootstrap samples")
    rng = np.random.default_rng(seed)
    if rank_fn is None:
        m = _canon([method], PAIR_METHODS)[0]

        def rank_fn(X, y):
            model = _fit_structured(X, y, data.likelihood, None, n_restarts, int(rng.integers(2**31)))
            return rank_features(gp_pair_scores(model, X, [m])[m], m).ordered()

    rankings = []
    for _ in range(n_boot):
        idx = rng.integers(0, data.n, size=data.n)
        rankings.append(list(rank_fn(data.X[idx], data.y[idx])))
    return ranking_entropy(rankings, top_k)
