"""Population Kendall's tau and Spearman's rho for copulas with count margins.

The closed-form routines (:func:`kendall_tau`, :func:`spearman_rho`) sum
over the joint mass function on the product of both margins' truncated
supports. Two checks that share no code with those sums are provided:
:func:`concordance_probabilities` enumerates sign classes of independent
copies directly, and :func:`jittered_rho_estimate` computes the classical
rank correlation of a simulated sample after adding uniform noise to each
count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
from scipy import stats

from countcopula.copulas import CopulaSpec, Family
from countcopula.margins import DEFAULT_TAIL, Bernoulli, DiscreteMargin

__all__ = [
    "BivariateCountModel",
    "DependenceResult",
    "Concordance",
    "joint_pmf",
    "kendall_tau",
    "spearman_rho",
    "tau_and_rho",
    "kendall_tau_bernoulli",
    "spearman_rho_bernoulli",
    "concordance_probabilities",
    "kendall_concordance",
    "jittered_rho_estimate",
    "dependence",
    "ratio_curve",
    "RatioPoint",
]

_NEG_TOL = 1e-12
_RATIO_TAU_MIN = 1e-9


@dataclass(frozen=True)
class _Grid:
    f: np.ndarray  # pmf of X on 0..K
    g: np.ndarray  # pmf of Y on 0..L
    F: np.ndarray  # F(x)
    G: np.ndarray
    Fm1: np.ndarray  # F(x - 1)
    Gm1: np.ndarray
    sfx: np.ndarray  # 1 - F(x)
    sfy: np.ndarray
    cdf_lag: np.ndarray  # C(F(x-1), G(y-1)), shape (K+1, L+1)
    h: np.ndarray  # joint pmf, shape (K+1, L+1)


@dataclass(frozen=True)
class BivariateCountModel:
    """A copula joined with two count margins."""

    copula: CopulaSpec
    margin_x: DiscreteMargin
    margin_y: DiscreteMargin

    def grid(self, tail: float = DEFAULT_TAIL, support_x=None, support_y=None) -> _Grid:
        kx = self.margin_x.truncation_point(tail) if support_x is None else int(support_x)
        ky = self.margin_y.truncation_point(tail) if support_y is None else int(support_y)
        xs = np.arange(-1, kx + 1)
        ys = np.arange(-1, ky + 1)
        Fe = self.margin_x.cdf(xs)
        Ge = self.margin_y.cdf(ys)
        C = self.copula.cdf(Fe[:, None], Ge[None, :])
        h = _rectangle_mass(C)
        return _Grid(
            f=self.margin_x.pmf(xs[1:]),
            g=self.margin_y.pmf(ys[1:]),
            F=Fe[1:],
            G=Ge[1:],
            Fm1=Fe[:-1],
            Gm1=Ge[:-1],
            sfx=self.margin_x.sf(xs[1:]),
            sfy=self.margin_y.sf(ys[1:]),
            cdf_lag=C[:-1, :-1],
            h=h,
        )

    def joint_pmf(self, x, y):
        return joint_pmf(self, x, y)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` count pairs as an ``(n, 2)`` integer array (quantile transform)."""
        u, v = self.copula.sample(n, rng)
        # quantile() needs levels below 1; u, v == 1 only through rounding
        top = np.nextafter(1.0, 0.0)
        x = self.margin_x.quantile(np.minimum(u, top))
        y = self.margin_y.quantile(np.minimum(v, top))
        return np.column_stack([x, y]).astype(np.int64)


def _rectangle_mass(C: np.ndarray) -> np.ndarray:
    """Second differences of a CDF table whose first row/column is the lag -1."""
    h = C[1:, 1:] - C[:-1, 1:] - C[1:, :-1] + C[:-1, :-1]
    worst = float(h.min()) if h.size else 0.0
    if worst < -_NEG_TOL:
        i, j = np.unravel_index(np.argmin(h), h.shape)
        raise ArithmeticError(
            f"joint pmf is negative ({worst:.3e}) at cell ({i}, {j}); the copula CDF is not 2-increasing"
        )
    return np.maximum(h, 0.0)


def joint_pmf(model: BivariateCountModel, x, y):
    """``h(x, y) = P(X = x, Y = y)`` by inclusion-exclusion on the copula."""
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0
    x = np.asarray(x)
    y = np.asarray(y)
    if np.any(x < 0) or np.any(y < 0):
        raise ValueError("joint pmf arguments must be nonnegative")
    Fx, Fx1 = model.margin_x.cdf(x), model.margin_x.cdf(x - 1)
    Gy, Gy1 = model.margin_y.cdf(y), model.margin_y.cdf(y - 1)
    C = model.copula.cdf
    h = np.asarray(C(Fx, Gy) - C(Fx1, Gy) - C(Fx, Gy1) + C(Fx1, Gy1))
    if np.any(h < -_NEG_TOL):
        raise ArithmeticError(f"joint pmf is negative ({h.min():.3e})")
    h = np.maximum(h, 0.0)
    return float(h) if scalar else h


def _tau_from_grid(gr: _Grid) -> float:
    double = np.sum(gr.h * (4.0 * gr.cdf_lag - gr.h))
    return float(double + np.sum(gr.f**2) + np.sum(gr.g**2) - 1.0)


def _rho_from_grid(gr: _Grid) -> float:
    kernel = (
        np.outer(gr.sfx, gr.sfy) + np.outer(gr.Fm1, gr.Gm1) - 0.5 * np.outer(gr.f, gr.g)
    )
    return float(6.0 * np.sum(gr.h * kernel) + 3.0 * (np.sum(gr.f**2) + np.sum(gr.g**2)) - 3.0)


def kendall_tau(model: BivariateCountModel, tail: float = DEFAULT_TAIL, support_x=None, support_y=None) -> float:
    """Population Kendall's tau, ties included.

    ``support_x``/``support_y`` override the upper summation limits, which
    otherwise are each margin's ``truncation_point(tail)``.
    """
    return _tau_from_grid(model.grid(tail, support_x, support_y))


def spearman_rho(model: BivariateCountModel, tail: float = DEFAULT_TAIL, support_x=None, support_y=None) -> float:
    """Population Spearman's rho from the three-copy concordance definition."""
    return _rho_from_grid(model.grid(tail, support_x, support_y))


def tau_and_rho(model: BivariateCountModel, tail: float = DEFAULT_TAIL, support_x=None, support_y=None):
    gr = model.grid(tail, support_x, support_y)
    return _tau_from_grid(gr), _rho_from_grid(gr)


def spearman_rho_bernoulli(copula: CopulaSpec, p_x: float, p_y: float) -> float:
    c = copula.cdf(1.0 - p_x, 1.0 - p_y)
    return -3.0 + 3.0 * c + 3.0 * p_x + 3.0 * p_y - 3.0 * p_x * p_y


def kendall_tau_bernoulli(copula: CopulaSpec, p_x: float, p_y: float) -> float:
    c = copula.cdf(1.0 - p_x, 1.0 - p_y)
    return 2.0 * (c - (1.0 - p_x) * (1.0 - p_y))


class Concordance(NamedTuple):
    p_c: float
    p_d: float
    p_t: float

    @property
    def difference(self) -> float:
        return self.p_c - self.p_d


def _oracle_tables(model: BivariateCountModel, tail: float, max_support: int):
    kx = model.margin_x.truncation_point(tail)
    ky = model.margin_y.truncation_point(tail)
    if kx + 1 > max_support or ky + 1 > max_support:
        raise ValueError(
            f"support too large for the enumeration oracle: {kx + 1} x {ky + 1} points "
            f"(limit {max_support} per margin)"
        )
    xs, ys = np.arange(kx + 1), np.arange(ky + 1)
    # pointwise pmf values, independent of the CDF-table path used by the closed forms
    h = np.maximum(joint_pmf(model, xs[:, None], ys[None, :]), 0.0)
    f = model.margin_x.pmf(xs)
    g = model.margin_y.pmf(ys)
    return xs, ys, h / h.sum(), f / f.sum(), g / g.sum()


def concordance_probabilities(
    model: BivariateCountModel, tail: float = 1e-8, max_support: int = 200
) -> Concordance:
    """Concordance, discordance and tie probabilities of ``(X1, Y1)`` against ``(X2, Y3)``.

    ``(X1, Y1)`` follows the model while ``X2`` and ``Y3`` are independent
    draws from the two margins, so ``3 * (p_c - p_d)`` is Spearman's rho.
    Computed by enumerating every ``(x1, y1, x2, y3)`` on supports truncated
    at ``tail`` and renormalised to unit mass.
    """
    xs, ys, h, f, g = _oracle_tables(model, tail, max_support)
    sx = np.sign(xs[:, None] - xs[None, :])  # (x1, x2)
    sy = np.sign(ys[:, None] - ys[None, :])  # (y1, y3)
    fg = np.outer(f, g)  # weight of (x2, y3)
    p_c = p_d = 0.0
    for i in range(len(xs)):
        # prod[j, k, l] = sign(x1_i - x2_k) * sign(y1_j - y3_l)
        prod = sx[i][None, :, None] * sy[:, None, :]
        w = h[i][:, None, None] * fg[None, :, :]
        p_c += float(np.sum(w[prod > 0]))
        p_d += float(np.sum(w[prod < 0]))
    return Concordance(p_c, p_d, _tie_mass(h, f, g))


def _tie_mass(h, f, g) -> float:
    """``P(X1 = X2 or Y1 = Y3)``, evaluated separately from the sign sums."""
    fx = h.sum(axis=1)
    gy = h.sum(axis=0)
    return float(np.dot(fx, f) + np.dot(gy, g) - np.sum(h * np.outer(f, g)))


def kendall_concordance(model: BivariateCountModel, tail: float = 1e-8, max_support: int = 200) -> Concordance:
    """Concordance probabilities for two independent copies of ``(X, Y)``.

    ``p_c - p_d`` is Kendall's tau.
    """
    xs, ys, h, _, _ = _oracle_tables(model, tail, max_support)
    sx = np.sign(xs[:, None] - xs[None, :])
    sy = np.sign(ys[:, None] - ys[None, :])
    p_c = p_d = 0.0
    for i in range(len(xs)):
        # prod[j, k, l] = sign(x1_i - x2_k) * sign(y1_j - y2_l)
        prod = sx[i][None, :, None] * sy[:, None, :]
        w = h[i][:, None, None] * h[None, :, :]
        p_c += float(np.sum(w[prod > 0]))
        p_d += float(np.sum(w[prod < 0]))
    fx = h.sum(axis=1)
    gy = h.sum(axis=0)
    p_t = float(np.dot(fx, fx) + np.dot(gy, gy) - np.sum(h * h))
    return Concordance(p_c, p_d, p_t)


def jittered_rho_estimate(model: BivariateCountModel, n: int, rng: np.random.Generator) -> float:
    """Sample Spearman correlation of ``(X + U, Y + V)`` with independent uniform jitter."""
    if n < 1000:
        raise ValueError(f"jittered estimate needs n >= 1000, got {n}")
    xy = model.sample(n, rng).astype(float)
    xy += rng.random(xy.shape)
    return float(stats.spearmanr(xy[:, 0], xy[:, 1]).statistic)


@dataclass(frozen=True)
class DependenceResult:
    tau: float
    rho: float
    ratio: float | None
    p_concordance: float
    p_discordance: float
    p_tie: float


def _ratio(rho: float, tau: float) -> float | None:
    return None if abs(tau) < _RATIO_TAU_MIN else rho / tau


def dependence(model: BivariateCountModel, tail: float = DEFAULT_TAIL, oracle_tail: float = 1e-8) -> DependenceResult:
    """Tau, rho, their ratio, and the three-copy concordance probabilities."""
    tau, rho = tau_and_rho(model, tail)
    conc = concordance_probabilities(model, oracle_tail)
    return DependenceResult(tau, rho, _ratio(rho, tau), conc.p_c, conc.p_d, conc.p_t)


class RatioPoint(NamedTuple):
    param: float
    theta: float
    tau: float
    rho: float
    ratio: float | None


def ratio_curve(
    family: str | Family,
    thetas: Iterable[float],
    margin: Callable[[float], DiscreteMargin],
    params: Sequence[float],
) -> list[RatioPoint]:
    """Rho/tau ratio over a grid of margin parameters, one curve per theta.

    ``margin(param)`` builds the common margin of both variables. Points
    with ``|tau| < 1e-9`` carry ``ratio=None``.
    """
    out = []
    for theta in thetas:
        cop = CopulaSpec(family, theta)
        for param in params:
            m = margin(param)
            if isinstance(m, Bernoulli):
                tau = kendall_tau_bernoulli(cop, m.p, m.p)
                rho = spearman_rho_bernoulli(cop, m.p, m.p)
            else:
                tau, rho = tau_and_rho(BivariateCountModel(cop, m, m))
            out.append(RatioPoint(float(param), float(theta), tau, rho, _ratio(rho, tau)))
    return out
