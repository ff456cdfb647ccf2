"""Maximum-likelihood fitting of count margins and copula parameters.

The margins are fitted first and then held fixed while the copula parameter
is estimated, i.e. inference functions for margins (IFM).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import numpy.typing as npt
from scipy import optimize, special, stats

from countcopula.copulas import CopulaSpec, Family
from countcopula.dependence import BivariateCountModel, tau_and_rho
from countcopula.exceptions import ConvergenceError, DataError
from countcopula.margins import NB2, DiscreteMargin, nb2_cdf, nb2_logpmf

logger = logging.getLogger(__name__)

__all__ = [
    "THETA_BOUNDS",
    "CopulaFit",
    "NB2Fit",
    "RegressionModel",
    "FitReport",
    "GOFResult",
    "IFMResult",
    "fit_copula_theta",
    "copula_loglik",
    "fit_nb2_simple",
    "fit_nb2_regression",
    "nb2_loglik",
    "nb2_score",
    "nb2_hessian",
    "ifm_fit",
    "plug_in_dependence",
    "chi_square_gof",
    "frequency_table",
    "backward_elimination",
]

THETA_BOUNDS = {
    Family.FRANK: (-50.0, 50.0),
    Family.CLAYTON: (1e-8, 60.0),
    Family.GUMBEL: (1.0, 60.0),
    Family.JOE: (1.0, 60.0),
    Family.AMH: (-1.0 + 1e-8, 1.0 - 1e-8),
}

_THETA_XTOL = 1e-8
_LOG_FLOOR = 1e-300
_PSI_BOUNDS = (1e-6, 1e6)
_BETA_DIVERGENCE = 30.0
_MIN_PAIRS = 30
_FRANK_GAP = 1e-8
_LL_ROUNDING = 1e-13
_STEP_TOL = 1e-4


# ---------------------------------------------------------------------------
# copula parameter


@dataclass(frozen=True)
class CopulaFit:
    family: Family
    theta: float
    loglik: float
    n: int
    at_boundary: bool

    @property
    def copula(self) -> CopulaSpec:
        return CopulaSpec(self.family, self.theta)

    @property
    def minus2loglik(self) -> float:
        return -2.0 * self.loglik


def _theta_grid(family: Family) -> np.ndarray:
    lo, hi = THETA_BOUNDS[family]
    if family is Family.FRANK:
        pos = np.geomspace(0.02, hi, 30)
        return np.concatenate([-pos[::-1], pos])
    if family is Family.CLAYTON:
        return np.concatenate([[lo], np.geomspace(1e-3, hi, 40)])
    if family in (Family.GUMBEL, Family.JOE):
        return np.concatenate([[lo], lo + np.geomspace(1e-3, hi - lo, 40)])
    return np.linspace(lo, hi, 41)


def _cdf_pairs(margin, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(F(v), F(v - 1))`` for one margin or a per-row sequence of margins."""
    if isinstance(margin, DiscreteMargin):
        return margin.cdf(values), margin.cdf(values - 1)
    margins = list(margin)
    if len(margins) != len(values):
        raise ValueError(f"got {len(margins)} per-row margins for {len(values)} observations")
    if all(isinstance(m, NB2) for m in margins):
        mu = np.array([m.mu for m in margins])
        psi = np.array([m.psi for m in margins])
        return nb2_cdf(values, mu, psi), nb2_cdf(values - 1, mu, psi)
    hi = np.array([m.cdf(int(v)) for m, v in zip(margins, values)])
    lo = np.array([m.cdf(int(v) - 1) for m, v in zip(margins, values)])
    return hi, lo


class _CopulaLikelihood:
    """Log-likelihood in theta with margins frozen, over distinct CDF rectangles."""

    def __init__(self, pairs, margin_x, margin_y, family: Family):
        pairs = np.asarray(pairs)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ValueError("pairs must have shape (n, 2)")
        x = pairs[:, 0].astype(np.int64)
        y = pairs[:, 1].astype(np.int64)
        if np.any(x < 0) or np.any(y < 0):
            raise ValueError("counts must be nonnegative")
        u1, u0 = _cdf_pairs(margin_x, x)
        v1, v0 = _cdf_pairs(margin_y, y)
        rect = np.column_stack([u1, u0, v1, v0])
        # sorting through np.unique makes the sum independent of row order
        self.rect, self.weight = np.unique(rect, axis=0, return_counts=True)
        self.family = family
        self.n = len(pairs)

    def __call__(self, theta: float) -> float:
        if self.family is Family.FRANK and abs(theta) < _FRANK_GAP:
            cop = CopulaSpec(Family.INDEPENDENCE)
        else:
            cop = CopulaSpec(self.family, theta)
        u1, u0, v1, v0 = self.rect.T
        h = cop.cdf(u1, v1) - cop.cdf(u0, v1) - cop.cdf(u1, v0) + cop.cdf(u0, v0)
        return float(np.dot(self.weight, np.log(np.maximum(h, _LOG_FLOOR))))


def copula_loglik(pairs, margin_x, margin_y, family, theta: float) -> float:
    """Sum of log joint pmf values at ``theta`` (margins fixed)."""
    return _CopulaLikelihood(pairs, margin_x, margin_y, Family.parse(family))(theta)


def fit_copula_theta(
    pairs: npt.ArrayLike,
    margin_x: DiscreteMargin | Sequence[DiscreteMargin],
    margin_y: DiscreteMargin | Sequence[DiscreteMargin],
    family: str | Family,
    bounds: tuple[float, float] | None = None,
) -> CopulaFit:
    """Maximise the copula log-likelihood in ``theta`` with margins held fixed.

    Margins are either one distribution for every row or a sequence with one
    distribution per row (e.g. regression margins). A coarse scan of the
    family domain brackets the maximum, which bounded Brent search then
    refines to ``1e-8`` in ``theta``.
    """
    family = Family.parse(family)
    if family not in THETA_BOUNDS:
        raise ValueError(f"{family.value} has no parameter to fit")
    lo, hi = bounds if bounds is not None else THETA_BOUNDS[family]
    ll = _CopulaLikelihood(pairs, margin_x, margin_y, family)
    if ll.n < _MIN_PAIRS:
        raise DataError(f"need at least {_MIN_PAIRS} pairs to fit a copula parameter, got {ll.n}")

    grid = _theta_grid(family)
    grid = grid[(grid >= lo) & (grid <= hi)]
    values = np.array([ll(t) for t in grid])
    i = int(np.argmax(values))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(
        lambda t: -ll(t), bounds=(a, b), method="bounded", options={"xatol": _THETA_XTOL, "maxiter": 500}
    )
    theta, best = float(res.x), -float(res.fun)
    # Brent never evaluates the bracket ends; keep a grid point if it is better
    if values[i] > best:
        theta, best = float(grid[i]), float(values[i])
    if family is Family.FRANK and abs(theta) < _FRANK_GAP:
        theta = float(np.copysign(_FRANK_GAP, theta))
    span = hi - lo
    edge = min(abs(theta - lo), abs(hi - theta)) <= max(1e-6, 1e-6 * span)
    if edge:
        logger.info("theta estimate %.6g on the %s domain boundary", theta, family.value)
    return CopulaFit(family, theta, best, ll.n, bool(edge))


# ---------------------------------------------------------------------------
# NB2 margins


@dataclass(frozen=True)
class NB2Fit:
    mu: float
    psi: float
    loglik: float
    n: int

    @property
    def margin(self) -> NB2:
        return NB2(self.mu, self.psi)


def frequency_table(values: npt.ArrayLike) -> np.ndarray:
    """Counts of each value ``0..max`` in a vector of nonnegative integers."""
    values = np.asarray(values)
    if values.size == 0:
        raise DataError("empty count vector")
    if np.any(values < 0) or np.any(values != np.floor(values)):
        raise DataError("counts must be nonnegative integers")
    return np.bincount(values.astype(np.int64))


def fit_nb2_simple(freq: npt.ArrayLike) -> NB2Fit:
    """NB2 fit to a frequency table (``freq[k]`` = number of observations equal to ``k``).

    The mean is the sample mean; ``psi`` maximises the likelihood with the
    mean held there.
    """
    freq = np.asarray(freq, dtype=float)
    if freq.ndim != 1 or freq.size == 0 or np.any(freq < 0) or freq.sum() == 0:
        raise DataError("frequency table must be a nonempty vector of nonnegative counts")
    k = np.arange(freq.size)
    n = freq.sum()
    mu = float(np.dot(k, freq) / n)
    if mu == 0.0:
        raise DataError("all observations are zero; the NB2 dispersion is not identifiable")
    keep = freq > 0

    def negll(log_psi):
        return -float(np.dot(freq[keep], nb2_logpmf(k[keep], mu, np.exp(log_psi))))

    lo, hi = np.log(_PSI_BOUNDS[0]), np.log(_PSI_BOUNDS[1])
    res = optimize.minimize_scalar(negll, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10, "maxiter": 1000})
    psi = float(np.exp(res.x))
    return NB2Fit(mu, psi, -float(res.fun), int(n))


def nb2_loglik(beta: np.ndarray, psi: float, y: np.ndarray, Z: np.ndarray) -> float:
    mu = np.exp(Z @ beta)
    return float(np.sum(nb2_logpmf(y, mu, psi)))


def nb2_score(beta: np.ndarray, psi: float, y: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Gradient of the NB2 log-likelihood in ``(beta, psi)``."""
    mu = np.exp(Z @ beta)
    d_eta = psi * (y - mu) / (mu + psi)
    d_psi = (
        special.digamma(y + psi) - special.digamma(psi) + np.log(psi) - np.log(mu + psi) + 1.0 - (y + psi) / (mu + psi)
    )
    return np.concatenate([Z.T @ d_eta, [d_psi.sum()]])


def nb2_hessian(beta: np.ndarray, psi: float, y: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Hessian of the NB2 log-likelihood in ``(beta, psi)``."""
    mu = np.exp(Z @ beta)
    s = mu + psi
    w_bb = -psi * mu * (y + psi) / s**2
    w_bp = mu * (y - mu) / s**2
    w_pp = special.polygamma(1, y + psi) - special.polygamma(1, psi) + 1.0 / psi - 2.0 / s + (y + psi) / s**2
    p = Z.shape[1]
    H = np.empty((p + 1, p + 1))
    H[:p, :p] = (Z * w_bb[:, None]).T @ Z
    H[:p, p] = H[p, :p] = Z.T @ w_bp
    H[p, p] = w_pp.sum()
    return H


@dataclass
class RegressionModel:
    """NB2 regression with log link: ``mu_i = exp(z_i . beta)``."""

    beta: np.ndarray
    psi: float
    columns: list[str]

    def mean(self, Z: npt.ArrayLike) -> np.ndarray:
        return np.exp(np.asarray(Z, dtype=float) @ self.beta)

    def margins(self, Z: npt.ArrayLike) -> list[NB2]:
        return [NB2(m, self.psi) for m in self.mean(Z)]


@dataclass
class FitReport:
    names: list[str]
    estimates: np.ndarray
    std_errors: np.ndarray
    p_values: np.ndarray
    loglik: float
    n_params: int
    n_obs: int
    converged: bool = True
    message: str = ""
    history: list[float] = field(default_factory=list)

    @property
    def minus2loglik(self) -> float:
        return -2.0 * self.loglik

    @property
    def aic(self) -> float:
        return -2.0 * self.loglik + 2.0 * self.n_params

    def to_dict(self) -> dict:
        return {
            "parameters": [
                {"name": n, "estimate": float(e), "std_error": float(s), "p_value": float(p)}
                for n, e, s, p in zip(self.names, self.estimates, self.std_errors, self.p_values)
            ],
            "loglik": self.loglik,
            "minus2loglik": self.minus2loglik,
            "aic": self.aic,
            "n_params": self.n_params,
            "n_obs": self.n_obs,
            "converged": self.converged,
            "message": self.message,
        }


def _dependent_columns(Z: np.ndarray, names: Sequence[str]) -> list[str]:
    """Columns taking part in a linear dependency (nonzero weight in a null vector)."""
    _, sv, vt = np.linalg.svd(Z, full_matrices=True)
    tol = sv.max() * max(Z.shape) * np.finfo(float).eps
    rank = int(np.sum(sv > tol))
    null = vt[rank:]
    involved = np.any(np.abs(null) > 1e-8, axis=0)
    return [n for n, hit in zip(names, involved) if hit]


def _wald(estimates: np.ndarray, info: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        cov = np.linalg.inv(info)
        se = np.sqrt(np.where(np.diag(cov) > 0, np.diag(cov), np.nan))
    except np.linalg.LinAlgError:
        se = np.full(len(estimates), np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = 2.0 * stats.norm.sf(np.abs(estimates / se))
    return se, p


def _newton_step_size(H: np.ndarray, grad: np.ndarray) -> float:
    p = len(grad) - 1
    try:
        return float(np.max(np.abs(np.linalg.solve(-H[:p, :p], grad[:p]))))
    except np.linalg.LinAlgError:
        return float("inf")


def _joint_newton_ok(H: np.ndarray) -> bool:
    """True when ``H`` is negative definite, so a joint Newton step is an ascent direction."""
    try:
        np.linalg.cholesky(-H)
    except np.linalg.LinAlgError:
        return False
    return True


def fit_nb2_regression(
    y: npt.ArrayLike,
    Z: npt.ArrayLike,
    columns: Sequence[str] | None = None,
    tol: float = 1e-6,
    max_iter: int = 500,
) -> tuple[RegressionModel, FitReport]:
    """NB2 regression by Newton ascent on ``beta`` alternating with a 1-D search in ``psi``.

    ``Z`` is the full design matrix, intercept column included. Converges
    when the infinity norm of the score in ``(beta, psi)`` falls below
    ``tol``. Standard errors come from the inverse observed information.
    """
    y = np.asarray(y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != y.shape[0]:
        raise DataError("design matrix must be 2-D with one row per response")
    n, p = Z.shape
    columns = list(columns) if columns is not None else [f"z{j}" for j in range(p)]
    if n <= p:
        raise DataError(f"need more observations ({n}) than design columns ({p})")
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise DataError("responses must be nonnegative integers")
    if np.linalg.matrix_rank(Z) < p:
        raise DataError(f"design matrix is rank deficient; dependent columns: {_dependent_columns(Z, columns)}")
    if y.sum() == 0:
        raise DataError("all responses are zero; the NB2 model is not identifiable")

    beta = np.linalg.lstsq(Z, np.full(n, np.log(y.mean())), rcond=None)[0]
    m, v = y.mean(), y.var()
    psi = m * m / (v - m) if v > m else 10.0
    psi = float(np.clip(psi, *_PSI_BOUNDS))
    ll = nb2_loglik(beta, psi, y, Z)
    history = [ll]
    converged = False
    message = ""
    log_lo, log_hi = np.log(_PSI_BOUNDS[0]), np.log(_PSI_BOUNDS[1])

    for _ in range(max_iter):
        grad = nb2_score(beta, psi, y, Z)
        H = nb2_hessian(beta, psi, y, Z)
        if np.max(np.abs(grad)) < tol and _newton_step_size(H, grad) < _STEP_TOL:
            # a vanishing score with a large Newton step means a flat ridge
            # (separation), so both must be small
            converged = True
            break
        if _joint_newton_ok(H):
            # near the optimum: joint Newton step in (beta, psi), quadratic convergence
            step = np.linalg.solve(-H, grad)
            t = 1.0
            while t > 1e-12:
                cand = np.r_[beta, psi] + t * step
                if _PSI_BOUNDS[0] <= cand[p] <= _PSI_BOUNDS[1]:
                    ll_cand = nb2_loglik(cand[:p], cand[p], y, Z)
                    # changes below the rounding level of the sum count as no loss
                    if ll_cand >= ll - _LL_ROUNDING * abs(ll):
                        beta, psi, ll = cand[:p], float(cand[p]), max(ll, ll_cand)
                        break
                t *= 0.5
            if t > 1e-12:
                history.append(ll)
                continue
        # Newton step in beta; the beta block of the Hessian is negative definite
        step = np.linalg.solve(-H[:p, :p], grad[:p])
        t = 1.0
        while t > 1e-12:
            cand = beta + t * step
            ll_cand = nb2_loglik(cand, psi, y, Z)
            if ll_cand >= ll:
                beta, ll = cand, ll_cand
                break
            t *= 0.5
        # profile psi at the current beta
        res = optimize.minimize_scalar(
            lambda lp: -nb2_loglik(beta, np.exp(lp), y, Z),
            bounds=(log_lo, log_hi),
            method="bounded",
            options={"xatol": 1e-12, "maxiter": 1000},
        )
        if -res.fun >= ll:
            psi, ll = float(np.exp(res.x)), -float(res.fun)
        history.append(ll)
        if np.max(np.abs(beta)) > _BETA_DIVERGENCE:
            message = f"coefficients diverging (|beta| > {_BETA_DIVERGENCE:g}); possible separation"
            break
        if len(history) > 3 and history[-1] - history[-4] <= 0.0 and t <= 1e-12:
            message = "no further ascent possible"
            break
    else:
        message = f"no convergence after {max_iter} iterations"

    if not converged and not message:
        message = "gradient tolerance not reached"
    if not converged:
        warnings.warn(f"NB2 regression: {message}", RuntimeWarning, stacklevel=2)

    est = np.concatenate([beta, [psi]])
    se, pv = _wald(est, -nb2_hessian(beta, psi, y, Z))
    model = RegressionModel(beta=beta, psi=psi, columns=columns)
    report = FitReport(
        names=columns + ["dispersion"],
        estimates=est,
        std_errors=se,
        p_values=pv,
        loglik=ll,
        n_params=p + 1,
        n_obs=n,
        converged=converged,
        message=message,
        history=history,
    )
    return model, report


def backward_elimination(
    y: npt.ArrayLike,
    Z: npt.ArrayLike,
    columns: Sequence[str],
    groups: dict[str, Sequence[str]] | None = None,
    alpha: float = 0.05,
    keep: Sequence[str] = ("intercept",),
) -> tuple[RegressionModel, FitReport, list[str]]:
    """Refit after repeatedly dropping the least significant term with p > ``alpha``.

    ``groups`` maps a covariate name to its dummy columns so that a
    categorical covariate is dropped as a whole, judged by its smallest
    p-value. Returns the final model, its report and the dropped terms.
    """
    Z = np.asarray(Z, dtype=float)
    columns = list(columns)
    groups = dict(groups) if groups else {c: [c] for c in columns if c not in keep}
    dropped: list[str] = []
    while True:
        cols = [c for c in columns if c in keep or any(c in g for k, g in groups.items() if k not in dropped)]
        idx = [columns.index(c) for c in cols]
        model, report = fit_nb2_regression(y, Z[:, idx], cols)
        pv = dict(zip(report.names, report.p_values))
        candidates = {
            k: min(pv[c] for c in g) for k, g in groups.items() if k not in dropped and all(c in pv for c in g)
        }
        if not candidates:
            return model, report, dropped
        worst = max(candidates, key=candidates.get)
        if not candidates[worst] > alpha:
            return model, report, dropped
        dropped.append(worst)


# ---------------------------------------------------------------------------
# goodness of fit


@dataclass(frozen=True)
class GOFResult:
    statistic: float
    p_value: float
    df: int
    observed: np.ndarray
    expected: np.ndarray

    @property
    def fitted_percent(self) -> np.ndarray:
        return 100.0 * self.expected / self.expected.sum()


def chi_square_gof(
    observed: npt.ArrayLike, margin: DiscreteMargin, df_rule: str = "cells-1", n_fitted: int = 0
) -> GOFResult:
    """Pearson chi-square of a frequency table against a count distribution.

    Cells are the values ``0..len(observed) - 1``; the last cell absorbs the
    upper tail. ``df_rule`` is ``"cells-1"`` or ``"cells-1-params"`` (the
    latter subtracts ``n_fitted``).
    """
    obs = np.asarray(observed, dtype=float)
    if obs.ndim != 1 or obs.size < 2:
        raise DataError("chi-square test needs at least two cells")
    n = obs.sum()
    k = np.arange(obs.size)
    probs = margin.pmf(k[:-1])
    probs = np.append(probs, margin.sf(obs.size - 2))
    expected = n * probs
    if np.any(expected <= 0.0):
        raise DataError(f"expected count is zero in cell(s) {list(k[expected <= 0.0])}")
    stat = float(np.sum((obs - expected) ** 2 / expected))
    if df_rule == "cells-1":
        df = obs.size - 1
    elif df_rule == "cells-1-params":
        df = obs.size - 1 - int(n_fitted)
    else:
        raise ValueError(f"unknown df rule {df_rule!r}")
    if df < 1:
        raise DataError(f"non-positive degrees of freedom ({df})")
    return GOFResult(stat, float(stats.chi2.sf(stat, df)), df, obs, expected)


# ---------------------------------------------------------------------------
# two-step IFM


@dataclass
class IFMResult:
    model_x: RegressionModel
    model_y: RegressionModel
    report_x: FitReport
    report_y: FitReport
    copula_fit: CopulaFit
    margins_x: list[NB2]
    margins_y: list[NB2]
    tau: float = float("nan")
    rho: float = float("nan")

    @property
    def theta(self) -> float:
        return self.copula_fit.theta

    @property
    def copula(self) -> CopulaSpec:
        return self.copula_fit.copula

    @property
    def converged(self) -> bool:
        return self.report_x.converged and self.report_y.converged

    @property
    def minus2loglik(self) -> float:
        return self.copula_fit.minus2loglik

    @property
    def aic(self) -> float:
        """Joint AIC counting both regressions and the copula parameter."""
        k = self.report_x.n_params + self.report_y.n_params + 1
        return self.copula_fit.minus2loglik + 2.0 * k


def plug_in_dependence(copula: CopulaSpec, margins_x: Sequence[NB2], margins_y: Sequence[NB2]) -> tuple[float, float]:
    """Kendall's tau and Spearman's rho averaged over rows with per-row margins.

    Rows sharing a covariate pattern have equal margins, so the population
    measures are computed once per distinct ``(margin_x, margin_y)`` pair.
    """
    keys = [(mx.mu, mx.psi, my.mu, my.psi) for mx, my in zip(margins_x, margins_y)]
    if not keys:
        raise ValueError("no rows")
    uniq, counts = np.unique(np.array(keys), axis=0, return_counts=True)
    vals = np.array([tau_and_rho(BivariateCountModel(copula, NB2(a, b), NB2(c, d))) for a, b, c, d in uniq])
    w = counts / counts.sum()
    return float(w @ vals[:, 0]), float(w @ vals[:, 1])


def ifm_fit(
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    Zx: npt.ArrayLike,
    Zy: npt.ArrayLike,
    family: str | Family,
    columns_x: Sequence[str] | None = None,
    columns_y: Sequence[str] | None = None,
) -> IFMResult:
    """Fit both NB2 regressions, then the copula parameter with row-wise margins fixed."""
    x = np.asarray(x)
    y = np.asarray(y)
    mx, rx = fit_nb2_regression(x, Zx, columns_x)
    my, ry = fit_nb2_regression(y, Zy, columns_y)
    margins_x = mx.margins(Zx)
    margins_y = my.margins(Zy)
    cfit = fit_copula_theta(np.column_stack([x, y]), margins_x, margins_y, family)
    tau, rho = plug_in_dependence(cfit.copula, margins_x, margins_y)
    return IFMResult(mx, my, rx, ry, cfit, margins_x, margins_y, tau, rho)
