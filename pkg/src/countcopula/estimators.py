"""scikit-learn style wrappers around the fitting routines.

The functional API in :mod:`countcopula.estimation` is the reference; these
classes add ``fit``/``predict``/``transform`` and ``get_params`` so the
models compose with scikit-learn tooling such as ``clone`` and pipelines.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.preprocessing import OneHotEncoder
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from countcopula.dependence import BivariateCountModel, tau_and_rho
from countcopula.estimation import copula_loglik, fit_copula_theta, fit_nb2_regression
from countcopula.margins import NB2, DiscreteMargin, nb2_logpmf

__all__ = ["NB2Regressor", "DiscreteCopula", "CovariateEncoder"]


class NB2Regressor(RegressorMixin, BaseEstimator):
    """Negative binomial (NB2) regression with a log link.

    Parameters
    ----------
    fit_intercept : bool, default=True
        Prepend a column of ones to ``X``.
    tol : float, default=1e-6
        Convergence threshold on the infinity norm of the score.
    max_iter : int, default=500

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    intercept_ : float
    psi_ : float
        Overdispersion; the conditional variance is ``mu * (1 + mu / psi_)``.
    report_ : FitReport
    """

    def __init__(self, fit_intercept: bool = True, tol: float = 1e-6, max_iter: int = 500):
        self.fit_intercept = fit_intercept
        self.tol = tol
        self.max_iter = max_iter

    def _design(self, X):
        X = np.asarray(X, dtype=float)
        if self.fit_intercept:
            X = np.column_stack([np.ones(len(X)), X])
        return X

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_features=0, y_numeric=True)
        names = [f"x{j}" for j in range(X.shape[1])]
        if self.fit_intercept:
            names = ["intercept"] + names
        model, report = fit_nb2_regression(y, self._design(X), names, tol=self.tol, max_iter=self.max_iter)
        beta = model.beta
        self.intercept_ = float(beta[0]) if self.fit_intercept else 0.0
        self.coef_ = beta[1:] if self.fit_intercept else beta
        self.psi_ = model.psi
        self.model_ = model
        self.report_ = report
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Conditional mean ``exp(intercept + X @ coef)``."""
        check_is_fitted(self, "coef_")
        X = check_array(X, ensure_min_features=0)
        return np.exp(self.intercept_ + X @ self.coef_)

    def predict_margins(self, X) -> list[NB2]:
        return [NB2(m, self.psi_) for m in self.predict(X)]

    def score(self, X, y):
        """Mean log-likelihood per observation (higher is better)."""
        return float(np.mean(nb2_logpmf(np.asarray(y), self.predict(X), self.psi_)))


class DiscreteCopula(BaseEstimator):
    """Copula parameter for count pairs with fixed margins.

    Parameters
    ----------
    family : str
        Parametric family: frank, clayton, gumbel, amh or joe.
    margin_x, margin_y : DiscreteMargin
        Margins held fixed during the fit.

    Attributes
    ----------
    theta_ : float
    loglik_ : float
    tau_, rho_ : float
        Population Kendall's tau and Spearman's rho at ``theta_``.
    """

    def __init__(self, family: str = "frank", margin_x: DiscreteMargin | None = None, margin_y: DiscreteMargin | None = None):
        self.family = family
        self.margin_x = margin_x
        self.margin_y = margin_y

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.int64)
        if X.shape[1] != 2:
            raise ValueError("X must have two columns of counts")
        if self.margin_x is None or self.margin_y is None:
            raise ValueError("both margins must be given")
        fit = fit_copula_theta(X, self.margin_x, self.margin_y, self.family)
        self.fit_ = fit
        self.theta_ = fit.theta
        self.loglik_ = fit.loglik
        self.copula_ = fit.copula
        self.tau_, self.rho_ = tau_and_rho(BivariateCountModel(fit.copula, self.margin_x, self.margin_y))
        self.n_features_in_ = 2
        return self

    def score(self, X, y=None):
        """Total log-likelihood of the count pairs at ``theta_``."""
        check_is_fitted(self, "theta_")
        return copula_loglik(check_array(X, dtype=np.int64), self.margin_x, self.margin_y, self.family, self.theta_)

    def sample(self, n: int, random_state=None) -> np.ndarray:
        check_is_fitted(self, "theta_")
        rng = np.random.default_rng(random_state)
        return BivariateCountModel(self.copula_, self.margin_x, self.margin_y).sample(n, rng)


class CovariateEncoder(TransformerMixin, BaseEstimator):
    """Reference-level dummy coding of categorical covariates.

    Parameters
    ----------
    names : sequence of str
        Covariate names, one per input column; output columns are named
        ``"name=level"``.
    levels : sequence of sequences
        Allowed levels per column, in output order.
    references : sequence
        Reference level per column; it gets no dummy column.
    intercept : bool, default=True
        Prepend an ``intercept`` column of ones.
    """

    def __init__(self, names: Sequence[str] = (), levels: Sequence[Sequence] = (), references: Sequence = (), intercept: bool = True):
        self.names = names
        self.levels = levels
        self.references = references
        self.intercept = intercept

    def fit(self, X=None, y=None):
        if not (len(self.names) == len(self.levels) == len(self.references)):
            raise ValueError("names, levels and references must have equal length")
        cats = [[str(v) for v in lv] for lv in self.levels]
        refs = [str(r) for r in self.references]
        for n, c, r in zip(self.names, cats, refs):
            if r not in c:
                raise ValueError(f"reference level {r!r} of {n} is not among its levels {c}")
        self.feature_names_out_ = (["intercept"] if self.intercept else []) + [
            f"{n}={lv}" for n, c, r in zip(self.names, cats, refs) for lv in c if lv != r
        ]
        if cats:
            self.encoder_ = OneHotEncoder(categories=cats, drop=refs, handle_unknown="error", sparse_output=False)
            self.encoder_.fit(np.array([[c[0] for c in cats]], dtype=object))
        else:
            self.encoder_ = None
        return self

    def transform(self, X):
        check_is_fitted(self, "feature_names_out_")
        X = np.asarray(X, dtype=object)
        n = X.shape[0]
        parts = [np.ones((n, 1))] if self.intercept else []
        if self.encoder_ is not None:
            X = np.vectorize(str, otypes=[object])(X.reshape(n, -1))
            parts.append(self.encoder_.transform(X))
        return np.hstack(parts) if parts else np.empty((n, 0))

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "feature_names_out_")
        return np.array(self.feature_names_out_, dtype=object)
