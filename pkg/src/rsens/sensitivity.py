"""R-sens / R-sens2 local sensitivities, the KL finite-difference
approximation, and aggregation into global rankings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .predictive import PredictiveDistribution, fisher_information, kl_divergence

__all__ = [
    "ParamSensitivity",
    "ImportanceReport",
    "rsens_local",
    "rsens2_local",
    "rsens_all",
    "rsens2_all",
    "kl_finite_difference",
    "aggregate_global",
    "rank_features",
    "default_fd_step",
]


@dataclass(frozen=True)
class ParamSensitivity:
    """A predictive distribution together with input-derivatives of its parameters.

    ``grad`` has shape (D, M): row d holds the derivative of the parameter
    vector with respect to input d. ``cross`` maps an index pair (d, e) to
    the M-vector of mixed second derivatives.
    """

    dist: PredictiveDistribution
    grad: np.ndarray
    cross: Mapping[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        grad = np.atleast_2d(np.asarray(self.grad, dtype=float))
        m = self.dist.n_params
        if grad.shape[1] != m:
            raise DataError(f"gradient rows must have length {m}, got shape {grad.shape}")
        object.__setattr__(self, "grad", grad)
        cross = {}
        for key, vec in dict(self.cross).items():
            vec = np.asarray(vec, dtype=float).reshape(-1)
            if vec.shape[0] != m:
                raise DataError(f"cross-derivative {key} must have length {m}")
            cross[(int(key[0]), int(key[1]))] = vec
        for (d, e), vec in cross.items():
            other = cross.get((e, d))
            if other is not None and not np.allclose(other, vec, rtol=1e-9, atol=1e-12):
                raise DataError(f"cross-derivatives ({d},{e}) and ({e},{d}) disagree")
        object.__setattr__(self, "cross", cross)

    @property
    def n_inputs(self) -> int:
        return self.grad.shape[0]

    def cross_derivative(self, d: int, e: int) -> np.ndarray:
        try:
            return self.cross[(d, e)]
        except KeyError:
            pass
        try:
            return self.cross[(e, d)]
        except KeyError:
            raise KeyError(f"no cross-derivative stored for pair ({d}, {e})") from None


@dataclass(frozen=True)
class ImportanceReport:
    method: str
    unit: str
    scores: dict
    ranks: dict

    def ordered(self) -> list:
        """Keys from most to least important."""
        return sorted(self.ranks, key=self.ranks.__getitem__)


def _quad_form(vec: np.ndarray, fisher: np.ndarray) -> float:
    return max(float(vec @ fisher @ vec), 0.0)


def rsens_local(s: ParamSensitivity, d: int, alpha: float = 1.0) -> float:
    """sqrt(alpha * g' I g) with g the derivative of the parameters w.r.t. input d."""
    if not 0 <= d < s.n_inputs:
        raise IndexError(f"input index {d} out of range for {s.n_inputs} inputs")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return math.sqrt(alpha) * math.sqrt(_quad_form(s.grad[d], fisher_information(s.dist)))


def rsens2_local(s: ParamSensitivity, d: int, e: int, alpha: float = 1.0) -> float:
    """sqrt(alpha * h' I h) with h the mixed second derivative for inputs (d, e)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    h = s.cross_derivative(d, e)
    return math.sqrt(alpha) * math.sqrt(_quad_form(h, fisher_information(s.dist)))


def rsens_all(s: ParamSensitivity, alpha: float = 1.0) -> np.ndarray:
    """R-sens for every input dimension at once."""
    fisher = fisher_information(s.dist)
    q = np.einsum("dm,mn,dn->d", s.grad, fisher, s.grad)
    return math.sqrt(alpha) * np.sqrt(np.clip(q, 0.0, None))


def rsens2_all(s: ParamSensitivity, alpha: float = 1.0) -> dict:
    """R-sens2 for every stored pair (only d < e keys are reported)."""
    fisher = fisher_information(s.dist)
    out = {}
    for (d, e), h in s.cross.items():
        key = (min(d, e), max(d, e))
        if key not in out:
            out[key] = math.sqrt(alpha) * math.sqrt(_quad_form(h, fisher))
    return out


def kl_finite_difference(
    predict: Callable[[np.ndarray], PredictiveDistribution],
    x,
    d: int,
    delta: float,
) -> float:
    """sqrt(2 KL(p(x) || p(x + delta e_d))) / delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    x = np.asarray(x, dtype=float)
    shifted = x.copy()
    shifted[d] += delta
    kl = kl_divergence(predict(x), predict(shifted))
    return math.sqrt(2.0 * max(kl, 0.0)) / delta


def default_fd_step(X: np.ndarray, rel: float = 1e-4, floor: float = 1e-8) -> np.ndarray:
    """Per-feature finite-difference steps: rel * column SD, at least ``floor``."""
    sd = np.std(np.asarray(X, dtype=float), axis=0)
    return np.maximum(rel * sd, floor)


def aggregate_global(local_values: Sequence[float]) -> float:
    """Mean of local (non-negative) sensitivity values."""
    values = np.asarray(local_values, dtype=float)
    if values.size == 0:
        raise DataError("cannot aggregate an empty list of local sensitivities")
    return float(np.mean(values))


def rank_features(scores: Mapping[Hashable, float], method: str = "", unit: str | None = None) -> ImportanceReport:
    """Rank keys by descending score; ties go to the smaller key.

    Keys may be feature indices or index pairs; ``unit`` is inferred from the
    key type when not given.
    """
    if not scores:
        raise DataError("no scores to rank")
    order = sorted(scores, key=lambda k: (-float(scores[k]), k))
    ranks = {key: i + 1 for i, key in enumerate(order)}
    if unit is None:
        unit = "pair" if isinstance(next(iter(scores)), tuple) else "feature"
    return ImportanceReport(
        method=method,
        unit=unit,
        scores={k: float(v) for k, v in scores.items()},
        ranks=ranks,
    )
