"""Copula models for bivariate count data.

The most used entry points are re-exported here; the submodules hold the
full API.
"""

from countcopula.copulas import CopulaSpec, Family
from countcopula.dependence import (
    BivariateCountModel,
    dependence,
    joint_pmf,
    kendall_tau,
    ratio_curve,
    spearman_rho,
    tau_and_rho,
)
from countcopula.estimation import (
    chi_square_gof,
    fit_copula_theta,
    fit_nb2_regression,
    fit_nb2_simple,
    ifm_fit,
)
from countcopula.estimators import CovariateEncoder, DiscreteCopula, NB2Regressor
from countcopula.exceptions import ConvergenceError, DataError
from countcopula.margins import NB2, Bernoulli, Binomial, NegBin, Poisson, format_margin, parse_margin
from countcopula.simulation import StudyConfig, run_study

__version__ = "0.1.0"

__all__ = [
    "CopulaSpec",
    "Family",
    "BivariateCountModel",
    "dependence",
    "joint_pmf",
    "kendall_tau",
    "spearman_rho",
    "tau_and_rho",
    "ratio_curve",
    "chi_square_gof",
    "fit_copula_theta",
    "fit_nb2_regression",
    "fit_nb2_simple",
    "ifm_fit",
    "CovariateEncoder",
    "DiscreteCopula",
    "NB2Regressor",
    "ConvergenceError",
    "DataError",
    "NB2",
    "Bernoulli",
    "Binomial",
    "NegBin",
    "Poisson",
    "format_margin",
    "parse_margin",
    "StudyConfig",
    "run_study",
]
