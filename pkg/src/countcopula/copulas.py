"""Bivariate Archimedean copulas plus the independence and Frechet-Hoeffding copulas.

Every family exposes the CDF, the partial derivative in the first argument
(the conditional CDF of ``V`` given ``U = u``) and a conditional-inversion
sampler. All evaluations are vectorised over ``u`` and ``v``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from countcopula.exceptions import ConvergenceError

__all__ = [
    "Family",
    "CopulaSpec",
    "copula_cdf",
    "conditional_cdf_given_u",
    "sample_pair",
    "ARCHIMEDEAN",
]

# Below this |theta| the Frank copula is evaluated as the product copula.
_FRANK_ZERO = 1e-8
_BISECT_TOL = 1e-10
_BISECT_MAXITER = 200
_UNIT_SLACK = 1e-12


class Family(str, enum.Enum):
    FRANK = "frank"
    CLAYTON = "clayton"
    GUMBEL = "gumbel"
    AMH = "amh"
    JOE = "joe"
    INDEPENDENCE = "independence"
    FRECHET_LOWER = "frechet-lower"
    FRECHET_UPPER = "frechet-upper"

    @classmethod
    def parse(cls, name: "str | Family") -> "Family":
        if isinstance(name, Family):
            return name
        key = str(name).strip().lower().replace("_", "-").replace(" ", "-")
        key = _ALIASES.get(key, key)
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown copula family {name!r}; expected one of {valid}") from None

    @property
    def has_parameter(self) -> bool:
        return self not in (Family.INDEPENDENCE, Family.FRECHET_LOWER, Family.FRECHET_UPPER)


_ALIASES = {
    "gumbel-hougaard": "gumbel",
    "gumbel-hugard": "gumbel",
    "ali-mikhail-haq": "amh",
    "ali-m-h": "amh",
    "product": "independence",
    "w": "frechet-lower",
    "m": "frechet-upper",
    "countermonotone": "frechet-lower",
    "comonotone": "frechet-upper",
}

ARCHIMEDEAN = (Family.FRANK, Family.CLAYTON, Family.GUMBEL, Family.AMH, Family.JOE)


def _check_theta(family: Family, theta: float | None) -> float | None:
    if not family.has_parameter:
        if theta is not None:
            raise ValueError(f"{family.value} copula takes no parameter, got theta={theta}")
        return None
    if theta is None:
        raise ValueError(f"{family.value} copula requires theta")
    theta = float(theta)
    if not np.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta}")
    ok = {
        Family.FRANK: theta != 0.0,
        Family.CLAYTON: theta > 0.0,
        Family.GUMBEL: theta >= 1.0,
        Family.AMH: -1.0 <= theta < 1.0,
        Family.JOE: theta >= 1.0,
    }[family]
    if not ok:
        domain = {
            Family.FRANK: "theta != 0",
            Family.CLAYTON: "theta > 0",
            Family.GUMBEL: "theta >= 1",
            Family.AMH: "-1 <= theta < 1",
            Family.JOE: "theta >= 1",
        }[family]
        raise ValueError(f"theta={theta} outside the {family.value} domain ({domain})")
    return theta


def _as_unit(name: str, x: npt.ArrayLike) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < -_UNIT_SLACK) or np.any(x > 1.0 + _UNIT_SLACK):
        raise ValueError(f"{name} must lie in [0, 1]")
    return np.clip(x, 0.0, 1.0)


@dataclass(frozen=True)
class CopulaSpec:
    """A copula family with its dependence parameter.

    Construction validates ``theta`` against the family domain, so any
    ``CopulaSpec`` instance is safe to evaluate.

    Examples
    --------
    >>> CopulaSpec("frank", 3.0).cdf(1.0, 0.7)
    0.7
    """

    family: Family
    theta: float | None = None

    def __post_init__(self):
        family = Family.parse(self.family)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "theta", _check_theta(family, self.theta))

    def __str__(self) -> str:
        if self.theta is None:
            return self.family.value
        return f"{self.family.value}({self.theta:g})"

    # ------------------------------------------------------------------ CDF
    def cdf(self, u: npt.ArrayLike, v: npt.ArrayLike):
        """Evaluate ``C(u, v)``. Scalars in, scalar out."""
        scalar = np.ndim(u) == 0 and np.ndim(v) == 0
        u = _as_unit("u", u)
        v = _as_unit("v", v)
        u, v = np.broadcast_arrays(u, v)
        out = np.clip(self._cdf(u, v), 0.0, 1.0)
        # boundary conditions hold exactly
        out = np.where(u == 1.0, v, out)
        out = np.where(v == 1.0, u, out)
        out = np.where((u == 0.0) | (v == 0.0), 0.0, out)
        return float(out) if scalar else out

    def _cdf(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        fam, t = self.family, self.theta
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if fam is Family.INDEPENDENCE or (fam is Family.FRANK and abs(t) < _FRANK_ZERO):
                return u * v
            if fam is Family.FRECHET_UPPER:
                return np.minimum(u, v)
            if fam is Family.FRECHET_LOWER:
                return np.maximum(u + v - 1.0, 0.0)
            if fam is Family.FRANK:
                # radial symmetry C(u, v) = u + v - 1 + C(1 - u, 1 - v) keeps log1p's
                # argument away from -1 in the upper corner
                flip = u + v > 1.0
                a = np.where(flip, 1.0 - u, u)
                b = np.where(flip, 1.0 - v, v)
                ratio = np.expm1(-t * a) * np.expm1(-t * b) / np.expm1(-t)
                c = -np.log1p(ratio) / t
                return np.where(flip, u + v - 1.0 + c, c)
            if fam is Family.CLAYTON:
                return np.exp(-_clayton_log_s(u, v, t) / t)
            if fam is Family.GUMBEL:
                return np.exp(-np.exp(_gumbel_log_a(u, v, t) / t))
            if fam is Family.AMH:
                return u * v / (1.0 - t * (1.0 - u) * (1.0 - v))
            if fam is Family.JOE:
                return -np.expm1(_joe_log_s(u, v, t) / t)
        raise AssertionError(fam)  # pragma: no cover

    # ------------------------------------------------- conditional CDF in v
    def conditional_cdf(self, u: npt.ArrayLike, v: npt.ArrayLike):
        """Partial derivative ``dC(u, v)/du``; a CDF in ``v`` for fixed ``u``.

        ``u`` must lie strictly inside (0, 1).
        """
        scalar = np.ndim(u) == 0 and np.ndim(v) == 0
        u = np.asarray(u, dtype=float)
        if np.any(~(u > 0.0)) or np.any(~(u < 1.0)):
            raise ValueError("conditional CDF requires u strictly inside (0, 1)")
        v = _as_unit("v", v)
        u, v = np.broadcast_arrays(u, v)
        out = np.clip(self._dcdf_du(u, v), 0.0, 1.0)
        out = np.where(v == 1.0, 1.0, out)
        out = np.where(v == 0.0, 0.0, out)
        return float(out) if scalar else out

    def _dcdf_du(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        fam, t = self.family, self.theta
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if fam is Family.INDEPENDENCE or (fam is Family.FRANK and abs(t) < _FRANK_ZERO):
                return v.copy()
            if fam is Family.FRECHET_UPPER:
                return (v >= u).astype(float)
            if fam is Family.FRECHET_LOWER:
                return (v >= 1.0 - u).astype(float)
            if fam is Family.FRANK:
                ev = np.expm1(-t * v)
                return np.exp(-t * u) * ev / (np.expm1(-t) + np.expm1(-t * u) * ev)
            if fam is Family.CLAYTON:
                log_s = _clayton_log_s(u, v, t)
                return np.exp(-(t + 1.0) * np.log(u) - (1.0 / t + 1.0) * log_s)
            if fam is Family.AMH:
                d = 1.0 - t * (1.0 - u) * (1.0 - v)
                return v * (1.0 - t * (1.0 - v)) / (d * d)
            if fam is Family.GUMBEL:
                x = -np.log(u)
                log_a = _gumbel_log_a(u, v, t)
                log_c = -np.exp(log_a / t)
                return np.exp(log_c + (1.0 / t - 1.0) * log_a + (t - 1.0) * np.log(x) + x)
            if fam is Family.JOE:
                one_minus_b = -np.expm1(t * np.log1p(-v))
                log_s = _joe_log_s(u, v, t)
                return np.exp((1.0 / t - 1.0) * log_s + (t - 1.0) * np.log1p(-u)) * one_minus_b
        raise AssertionError(fam)  # pragma: no cover

    def inverse_conditional_cdf(self, u: npt.ArrayLike, w: npt.ArrayLike) -> np.ndarray:
        """Solve ``dC(u, v)/du = w`` for ``v``.

        Closed forms for Frank and Clayton; vectorised bisection otherwise.
        """
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        u, w = np.broadcast_arrays(u, w)
        fam, t = self.family, self.theta
        if fam is Family.INDEPENDENCE or (fam is Family.FRANK and abs(t) < _FRANK_ZERO):
            return w.copy()
        if fam is Family.FRECHET_UPPER:
            return u.copy()
        if fam is Family.FRECHET_LOWER:
            return 1.0 - u
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if fam is Family.FRANK:
                a = w * np.expm1(-t) / (np.exp(-t * u) * (1.0 - w) + w)
                return np.clip(-np.log1p(a) / t, 0.0, 1.0)
            if fam is Family.CLAYTON:
                # v = ((w^(-t/(1+t)) - 1) u^(-t) + 1)^(-1/t), evaluated in logs
                log_term = np.log(np.expm1(-t / (1.0 + t) * np.log(w))) - t * np.log(u)
                return np.clip(np.exp(-np.logaddexp(log_term, 0.0) / t), 0.0, 1.0)
        return self._bisect(u, w)

    def _bisect(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        lo = np.zeros_like(u)
        hi = np.ones_like(u)
        for _ in range(_BISECT_MAXITER):
            mid = 0.5 * (lo + hi)
            below = self._dcdf_du(u, mid) < w
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= _BISECT_TOL):
                return 0.5 * (lo + hi)
        width = float(np.max(hi - lo))
        worst = int(np.argmax(hi - lo))
        raise ConvergenceError(
            f"bisection for {self} did not reach {_BISECT_TOL:g} after {_BISECT_MAXITER} "
            f"iterations (bracket width {width:.3g} at u={u.flat[worst]:.17g}, w={w.flat[worst]:.17g})"
        )

    # ------------------------------------------------------------ sampling
    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``n`` pairs ``(U, V)`` by conditional inversion.

        ``U`` and the inversion level ``W`` are drawn in that order from ``rng``.
        """
        u = rng.random(n)
        w = rng.random(n)
        # u == 0 has probability 2^-53; keep it off the open-interval requirement
        u = np.where(u == 0.0, np.finfo(float).tiny, u)
        return u, self.inverse_conditional_cdf(u, w)


def _clayton_log_s(u: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
    """log(u^-t + v^-t - 1) without overflow."""
    a = -t * np.log(u)
    b = -t * np.log(v)
    m = np.maximum(a, b)
    n = np.minimum(a, b)
    return m + np.log1p(np.exp(n - m) - np.exp(-m))


def _gumbel_log_a(u: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
    """log((-log u)^t + (-log v)^t)."""
    return np.logaddexp(t * np.log(-np.log(u)), t * np.log(-np.log(v)))


def _joe_log_s(u: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
    """``log(a + b - ab)`` with ``a = (1 - u)^t``, ``b = (1 - v)^t``; ``1 - C = exp(log_s / t)``.

    Near the lower corner ``log1p(-(1 - a)(1 - b))`` is accurate; towards the
    upper corner ``a`` and ``b`` can be far below machine epsilon and the sum
    is formed in log space instead.
    """
    log_a = t * np.log1p(-u)
    log_b = t * np.log1p(-v)
    prod = np.expm1(log_a) * np.expm1(log_b)  # (1 - a)(1 - b)
    near_lower = prod < 0.5
    lo = np.log1p(-np.where(near_lower, prod, 0.0))
    hi = np.logaddexp(log_a, log_b + np.log1p(-np.exp(log_a)))
    return np.where(near_lower, lo, hi)


def copula_cdf(spec: CopulaSpec, u, v):
    return spec.cdf(u, v)


def conditional_cdf_given_u(spec: CopulaSpec, u, v):
    return spec.conditional_cdf(u, v)


def sample_pair(spec: CopulaSpec, rng: np.random.Generator) -> tuple[float, float]:
    u, v = spec.sample(1, rng)
    return float(u[0]), float(v[0])
