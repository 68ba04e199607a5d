"""Rare-event estimators for the left tail of a sum of the largest order statistics."""

from __future__ import annotations

from .distributions import (
    Exponential,
    Gamma,
    GeneralizedGamma,
    LogNormal,
    OrderStatSumProblem,
    ParetoLomax,
    Weibull,
    format_dist,
    parse_dist,
)
from .errors import (
    ConfigError,
    DomainError,
    IterationCapError,
    NumericalError,
    OstailError,
    PreconditionError,
    UnsupportedFamilyError,
    VerificationError,
)
from .estimators import (
    ESTIMATORS,
    EstimationResult,
    IsWeights,
    cmc_gg,
    cmc_lognormal,
    naive_mc,
    pareto_is,
    universal_is,
    weibull_is,
)
from .rqmc import RqmcPlan, rqmc_estimate
from .samplers import RngStream
from .special import HypoexpSpec, hypoexp_cdf

__version__ = "0.1.0"

__all__ = [
    "ESTIMATORS",
    "ConfigError",
    "DomainError",
    "EstimationResult",
    "Exponential",
    "Gamma",
    "GeneralizedGamma",
    "HypoexpSpec",
    "IsWeights",
    "IterationCapError",
    "LogNormal",
    "NumericalError",
    "OrderStatSumProblem",
    "OstailError",
    "ParetoLomax",
    "PreconditionError",
    "RngStream",
    "RqmcPlan",
    "UnsupportedFamilyError",
    "VerificationError",
    "Weibull",
    "cmc_gg",
    "cmc_lognormal",
    "format_dist",
    "hypoexp_cdf",
    "naive_mc",
    "pareto_is",
    "parse_dist",
    "rqmc_estimate",
    "universal_is",
    "weibull_is",
]
