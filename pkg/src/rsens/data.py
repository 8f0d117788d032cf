"""Dataset container, CSV ingestion and experiment-config validation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import DataError, RsensError

__all__ = [
    "ConfigError",
    "Dataset",
    "ingest_csv",
    "validate_config",
    "CONFIG_SCHEMAS",
]


class ConfigError(RsensError, ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class Dataset:
    """Predictors ``X`` (possibly standardized) and target ``y``.

    ``x_mean``/``x_sd`` (and ``y_mean``/``y_sd`` for Gaussian targets) record
    the affine transform applied at ingestion; identity when not standardized.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple
    target_name: str = "y"
    likelihood: str = "gaussian"
    x_mean: np.ndarray = None
    x_sd: np.ndarray = None
    y_mean: float = 0.0
    y_sd: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise DataError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if len(self.feature_names) != X.shape[1]:
            raise DataError("one feature name per column required")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains missing or non-finite values")
        D = X.shape[1]
        x_mean = np.zeros(D) if self.x_mean is None else np.asarray(self.x_mean, dtype=float)
        x_sd = np.ones(D) if self.x_sd is None else np.asarray(self.x_sd, dtype=float)
        if np.any(x_sd <= 0) or self.y_sd <= 0:
            raise DataError("standardization scales must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "x_mean", x_mean)
        object.__setattr__(self, "x_sd", x_sd)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def to_raw_X(self, Xs) -> np.ndarray:
        return np.asarray(Xs, dtype=float) * self.x_sd + self.x_mean

    def from_raw_X(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.x_mean) / self.x_sd

    def to_raw_y(self, ys) -> np.ndarray:
        return np.asarray(ys, dtype=float) * self.y_sd + self.y_mean

    def from_raw_y(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_sd

    def subset(self, rows) -> "Dataset":
        """Rows ``rows`` of the (already transformed) data; transform record kept."""
        rows = np.asarray(rows)
        return Dataset(
            self.X[rows], self.y[rows], self.feature_names, self.target_name, self.likelihood,
            self.x_mean, self.x_sd, self.y_mean, self.y_sd, dict(self.meta),
        )


def _check_target(y, likelihood, line_numbers, name):
    if likelihood == "gaussian":
        return
    if likelihood == "probit":
        bad = np.flatnonzero((y != 0) & (y != 1))
        what = "0/1"
    elif likelihood == "poisson":
        bad = np.flatnonzero((y < 0) | (y != np.round(y)))
        what = "a non-negative integer"
    else:
        raise DataError(f"unknown likelihood {likelihood!r}")
    if bad.size:
        i = bad[0]
        raise DataError(f"row {line_numbers[i]}, column {name!r}: target {y[i]!r} is not {what}")


def ingest_csv(path, target: str, likelihood: str = "gaussian", standardize: bool = True, columns=None) -> Dataset:
    """Read a headed, comma-separated numeric CSV into a ``Dataset``.

    Every column except ``target`` (or only ``columns`` if given) becomes a
    predictor. Predictors are standardized to mean 0 and SD 1 (population
    SD); the target only for the Gaussian likelihood. Row numbers in error
    messages are file line numbers (header = line 1).
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        if target not in header:
            raise DataError(f"target column {target!r} not in header {header}")
        names = [h for h in header if h != target] if columns is None else list(columns)
        missing = [c for c in names if c not in header]
        if missing:
            raise DataError(f"columns {missing} not in header")
        idx = [header.index(c) for c in names]
        t_idx = header.index(target)
        rows, lines = [], []
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise DataError(f"row {lineno}: expected {len(header)} fields, found {len(raw)}")
            vals = []
            for j in idx + [t_idx]:
                cell = raw[j].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"row {lineno}, column {header[j]!r}: non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"row {lineno}, column {header[j]!r}: missing or non-finite value {cell!r}")
                vals.append(v)
            rows.append(vals)
            lines.append(lineno)
    if len(rows) < 2:
        raise DataError(f"{path} has fewer than two data rows")
    arr = np.array(rows)
    X, y = arr[:, :-1], arr[:, -1]
    _check_target(y, likelihood, lines, target)
    sd = X.std(axis=0)
    const = [names[j] for j in np.flatnonzero(sd == 0)]
    if const:
        raise DataError(f"constant predictor column(s) {const} cannot be standardized; drop them")
    kw: dict[str, Any] = {}
    if standardize:
        mu = X.mean(axis=0)
        X = (X - mu) / sd
        kw.update(x_mean=mu, x_sd=sd)
        if likelihood == "gaussian":
            y_sd = float(y.std())
            if y_sd == 0:
                raise DataError(f"target column {target!r} is constant")
            y_mean = float(y.mean())
            y = (y - y_mean) / y_sd
            kw.update(y_mean=y_mean, y_sd=y_sd)
    return Dataset(X, y, tuple(names), target, likelihood, meta={"path": str(path)}, **kw)


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------

_INT = (int,)
_NUM = (int, float)
_STR = (str,)
_LIST = (list, tuple)
_BOOL = (bool,)

CONFIG_SCHEMAS: dict[str, dict[str, tuple]] = {
    "rank": {
        "data": (_STR, None), "target": (_STR, None), "likelihood": (_STR, "gaussian"),
        "methods": (_LIST, ["rsens"]), "alpha": (_NUM, 1.0), "pairs": (_BOOL, False),
        "standardize": (_BOOL, True), "restarts": (_INT, 3), "seed": (_INT, 0),
    },
    "simulate-main": {
        "shape": (_STR, "x"), "dist": (_STR, "StudentT3"), "n": (_INT, 200), "d": (_INT, 10),
        "noise_sd": (_NUM, 1.0), "reps": (_INT, 20), "methods": (_LIST, None), "seed": (_INT, None),
    },
    "simulate-interactions": {
        "n_values": (_LIST, [300]), "reps": (_INT, 5), "methods": (_LIST, None),
        "noise_sd": (_NUM, 0.5), "restarts": (_INT, 3), "seed": (_INT, None),
    },
    "cv": {
        "data": (_STR, None), "target": (_STR, None), "likelihood": (_STR, "gaussian"),
        "interactions": (_LIST, [0, 1, 2, 3, 4, 5]), "splits": (_INT, 10), "train_size": (_INT, 80),
        "methods": (_LIST, None), "restarts": (_INT, 2), "standardize": (_BOOL, True), "seed": (_INT, None),
    },
    "stability": {
        "data": (_STR, None), "target": (_STR, None), "likelihood": (_STR, "gaussian"),
        "methods": (_LIST, None), "boot": (_INT, 20), "top_k": (_INT, 5), "restarts": (_INT, 1),
        "standardize": (_BOOL, True), "seed": (_INT, None),
    },
    "check": {"seed": (_INT, 0)},
}

_REQUIRED = {
    "rank": ("data", "target"),
    "simulate-main": ("seed",),
    "simulate-interactions": ("seed",),
    "cv": ("data", "target", "seed"),
    "stability": ("data", "target", "seed"),
    "check": (),
}


def validate_config(command: str, config: Mapping[str, Any]) -> dict:
    """Check ``config`` against the schema for ``command`` and fill defaults.

    Unknown keys, wrong types and missing required keys raise ``ConfigError``.
    """
    if command not in CONFIG_SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    schema = CONFIG_SCHEMAS[command]
    unknown = sorted(set(config) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config key(s) for {command}: {unknown}")
    out = {}
    for key, (types, default) in schema.items():
        value = config.get(key)
        if value is None:
            value = list(default) if isinstance(default, list) else default
        elif isinstance(value, bool) and bool not in types:
            raise ConfigError(f"{key}: expected {types[0].__name__}, got bool")
        elif not isinstance(value, types):
            raise ConfigError(f"{key}: expected {types[0].__name__}, got {type(value).__name__}")
        out[key] = list(value) if isinstance(value, tuple) else value
    missing = [k for k in _REQUIRED[command] if out.get(k) is None]
    if missing:
        raise ConfigError(f"{command} requires {', '.join('--' + k.replace('_', '-') for k in missing)}")
    return out
