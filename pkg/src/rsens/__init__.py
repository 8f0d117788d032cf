"""Sensitivity of predictive distributions to their inputs.

Local sensitivities are square roots of Fisher-information quadratic forms
of the input-derivatives of a predictive distribution's parameters; they
equal the curvature of the Renyi divergence between predictives at nearby
inputs.
"""

from .errors import (
    DataError,
    DomainError,
    FitError,
    QuadratureError,
    RsensError,
    UndefinedDivergenceError,
    VariantMismatchError,
)
from .predictive import (
    Bernoulli,
    Gaussian,
    Poisson,
    StudentT,
    fisher_information,
    from_params,
    kl_divergence,
    log_density,
    renyi_divergence,
)
from .sensitivity import (
    ImportanceReport,
    ParamSensitivity,
    aggregate_global,
    kl_finite_difference,
    rank_features,
    rsens2_all,
    rsens2_local,
    rsens_all,
    rsens_local,
)
from .gp import FittedGP, gp_fit, gp_predict_dist, gp_predictive, gp_predictive_batch
from .linear import blm_fit, blm_predict, blm_rsens_closed_form, blm_sensitivity, logistic_fit, logistic_rsens
from .data import Dataset, ingest_csv

__version__ = "0.1.0"
