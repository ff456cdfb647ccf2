"""Count distributions used as copula margins.

Each margin is an immutable object with vectorised ``pmf``, ``cdf`` and
``sf`` over integer arguments, a ``quantile`` and a ``truncation_point``
that bounds the omitted upper-tail mass. Mass functions are evaluated in
log space through ``gammaln``; CDFs use the regularised incomplete beta and
gamma functions so that tail probabilities keep full relative precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy import special

__all__ = [
    "DiscreteMargin",
    "Bernoulli",
    "Binomial",
    "Poisson",
    "NegBin",
    "NB2",
    "nb2_logpmf",
    "nb2_cdf",
    "parse_margin",
    "format_margin",
    "nb2_sf",
    "DEFAULT_TAIL",
]

DEFAULT_TAIL = 1e-12


def _as_int_array(k: npt.ArrayLike) -> np.ndarray:
    k = np.asarray(k)
    if k.dtype.kind == "f":
        if np.any(k != np.floor(k)):
            raise ValueError("count arguments must be integers")
        k = k.astype(np.int64)
    return k


def nb2_logpmf(k: npt.ArrayLike, mu: npt.ArrayLike, psi: npt.ArrayLike) -> np.ndarray:
    """Log mass of NB2(mu, psi) at ``k``; broadcasts over all arguments.

    ``-inf`` for negative ``k``.
    """
    k = np.asarray(k, dtype=float)
    mu = np.asarray(mu, dtype=float)
    psi = np.asarray(psi, dtype=float)
    kk = np.maximum(k, 0.0)
    out = (
        special.gammaln(psi + kk)
        - special.gammaln(psi)
        - special.gammaln(kk + 1.0)
        + psi * (np.log(psi) - np.log(mu + psi))
        + special.xlogy(kk, mu)
        - kk * np.log(mu + psi)
    )
    return np.where(k < 0, -np.inf, out)


def nb2_cdf(k: npt.ArrayLike, mu: npt.ArrayLike, psi: npt.ArrayLike) -> np.ndarray:
    """CDF of NB2(mu, psi) at integer ``k``; broadcasts."""
    k = np.asarray(k, dtype=float)
    mu = np.asarray(mu, dtype=float)
    psi = np.asarray(psi, dtype=float)
    p = psi / (mu + psi)
    out = special.betainc(psi, np.maximum(k, 0.0) + 1.0, p)
    return np.where(k < 0, 0.0, out)


def nb2_sf(k: npt.ArrayLike, mu: npt.ArrayLike, psi: npt.ArrayLike) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    mu = np.asarray(mu, dtype=float)
    psi = np.asarray(psi, dtype=float)
    q = mu / (mu + psi)
    out = special.betainc(np.maximum(k, 0.0) + 1.0, psi, q)
    return np.where(k < 0, 1.0, out)


class DiscreteMargin:
    """Base class for margins supported on the nonnegative integers."""

    #: largest support point, ``None`` for unbounded support
    support_max: int | None = None

    def logpmf(self, k: npt.ArrayLike) -> np.ndarray:
        raise NotImplementedError

    def _cdf(self, k: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _sf(self, k: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def var(self) -> float:
        raise NotImplementedError

    def pmf(self, k: npt.ArrayLike):
        scalar = np.ndim(k) == 0
        k = _as_int_array(k)
        out = np.exp(self.logpmf(k))
        return float(out) if scalar else out

    def cdf(self, k: npt.ArrayLike):
        """``P(X <= k)`` for any integer ``k``; 0 for ``k < 0``."""
        scalar = np.ndim(k) == 0
        k = _as_int_array(k)
        out = np.where(k < 0, 0.0, self._cdf(np.maximum(k, 0)))
        if self.support_max is not None:
            out = np.where(k >= self.support_max, 1.0, out)
        out = np.clip(out, 0.0, 1.0)
        return float(out) if scalar else out

    def sf(self, k: npt.ArrayLike):
        """``P(X > k)``."""
        scalar = np.ndim(k) == 0
        k = _as_int_array(k)
        out = np.where(k < 0, 1.0, self._sf(np.maximum(k, 0)))
        if self.support_max is not None:
            out = np.where(k >= self.support_max, 0.0, out)
        out = np.clip(out, 0.0, 1.0)
        return float(out) if scalar else out

    def quantile(self, q: npt.ArrayLike):
        """Smallest ``k >= 0`` with ``cdf(k) >= q``, for ``q`` in [0, 1)."""
        scalar = np.ndim(q) == 0
        q = np.asarray(q, dtype=float)
        if np.any(np.isnan(q)) or np.any(q < 0.0) or np.any(q >= 1.0):
            raise ValueError("quantile level must lie in [0, 1)")
        top = self._upper_for(float(q.max()) if q.size else 0.0)
        table = self.cdf(np.arange(top + 1))
        out = np.searchsorted(table, q, side="left")
        out = np.minimum(out, top).astype(np.int64)
        return int(out) if scalar else out

    def _upper_for(self, q: float) -> int:
        """A support point whose CDF is at least ``q``."""
        if self.support_max is not None:
            return self.support_max
        k = max(1, int(math.ceil(self.mean + 10.0 * math.sqrt(self.var))))
        while self.cdf(k) < q:
            k *= 2
        return k

    def truncation_point(self, tail: float = DEFAULT_TAIL) -> int:
        """Smallest ``k`` with ``P(X > k) <= tail``."""
        if not 0.0 < tail <= 0.01:
            raise ValueError(f"tail mass must lie in (0, 0.01], got {tail}")
        if self.support_max is not None:
            ks = np.arange(self.support_max + 1)
            return int(np.argmax(self.sf(ks) <= tail))
        hi = max(1, int(math.ceil(self.mean + 10.0 * math.sqrt(self.var))))
        while self.sf(hi) > tail:
            hi *= 2
        ks = np.arange(hi + 1)
        return int(np.argmax(self.sf(ks) <= tail))

    def support(self, tail: float = DEFAULT_TAIL) -> np.ndarray:
        return np.arange(self.truncation_point(tail) + 1)


def _check_prob(name: str, p: float, open_left=True, open_right=True) -> float:
    p = float(p)
    lo_ok = p > 0.0 if open_left else p >= 0.0
    hi_ok = p < 1.0 if open_right else p <= 1.0
    if not (lo_ok and hi_ok):
        raise ValueError(f"{name} must lie in (0, 1), got {p}")
    return p


def _check_positive(name: str, x: float) -> float:
    x = float(x)
    if not (x > 0.0 and np.isfinite(x)):
        raise ValueError(f"{name} must be positive and finite, got {x}")
    return x


@dataclass(frozen=True)
class Bernoulli(DiscreteMargin):
    p: float

    def __post_init__(self):
        object.__setattr__(self, "p", _check_prob("p", self.p))

    support_max = 1

    def logpmf(self, k):
        k = np.asarray(k)
        with np.errstate(divide="ignore"):
            return np.where(k == 0, np.log1p(-self.p), np.where(k == 1, np.log(self.p), -np.inf))

    def _cdf(self, k):
        return np.where(k == 0, 1.0 - self.p, 1.0)

    def _sf(self, k):
        return np.where(k == 0, self.p, 0.0)

    @property
    def mean(self):
        return self.p

    @property
    def var(self):
        return self.p * (1.0 - self.p)


@dataclass(frozen=True)
class Binomial(DiscreteMargin):
    n: int
    p: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", _check_prob("p", self.p))

    @property
    def support_max(self):
        return self.n

    def logpmf(self, k):
        k = np.asarray(k, dtype=float)
        kk = np.clip(k, 0, self.n)
        out = (
            special.gammaln(self.n + 1.0)
            - special.gammaln(kk + 1.0)
            - special.gammaln(self.n - kk + 1.0)
            + kk * np.log(self.p)
            + (self.n - kk) * np.log1p(-self.p)
        )
        return np.where((k < 0) | (k > self.n), -np.inf, out)

    def _cdf(self, k):
        k = np.minimum(k, self.n - 1).astype(float)
        return special.betainc(self.n - k, k + 1.0, 1.0 - self.p)

    def _sf(self, k):
        k = np.minimum(k, self.n - 1).astype(float)
        return special.betainc(k + 1.0, self.n - k, self.p)

    @property
    def mean(self):
        return self.n * self.p

    @property
    def var(self):
        return self.n * self.p * (1.0 - self.p)


@dataclass(frozen=True)
class Poisson(DiscreteMargin):
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "lam", _check_positive("lambda", self.lam))

    def logpmf(self, k):
        k = np.asarray(k, dtype=float)
        kk = np.maximum(k, 0.0)
        out = kk * np.log(self.lam) - self.lam - special.gammaln(kk + 1.0)
        return np.where(k < 0, -np.inf, out)

    def _cdf(self, k):
        return special.gammaincc(k + 1.0, self.lam)

    def _sf(self, k):
        return special.gammainc(k + 1.0, self.lam)

    @property
    def mean(self):
        return self.lam

    @property
    def var(self):
        return self.lam


@dataclass(frozen=True)
class NegBin(DiscreteMargin):
    """Number of failures before the ``r``-th success, success probability ``p``."""

    r: float
    p: float

    def __post_init__(self):
        object.__setattr__(self, "r", _check_positive("r", self.r))
        object.__setattr__(self, "p", _check_prob("p", self.p))

    def logpmf(self, k):
        k = np.asarray(k, dtype=float)
        kk = np.maximum(k, 0.0)
        out = (
            special.gammaln(self.r + kk)
            - special.gammaln(self.r)
            - special.gammaln(kk + 1.0)
            + self.r * np.log(self.p)
            + kk * np.log1p(-self.p)
        )
        return np.where(k < 0, -np.inf, out)

    def _cdf(self, k):
        return special.betainc(self.r, k + 1.0, self.p)

    def _sf(self, k):
        return special.betainc(k + 1.0, self.r, 1.0 - self.p)

    @property
    def mean(self):
        return self.r * (1.0 - self.p) / self.p

    @property
    def var(self):
        return self.r * (1.0 - self.p) / self.p**2


@dataclass(frozen=True)
class NB2(DiscreteMargin):
    """Negative binomial with mean ``mu`` and overdispersion ``psi``.

    The variance is ``mu * (1 + mu / psi)``; ``psi -> inf`` recovers the
    Poisson distribution.
    """

    mu: float
    psi: float

    def __post_init__(self):
        object.__setattr__(self, "mu", _check_positive("mu", self.mu))
        object.__setattr__(self, "psi", _check_positive("psi", self.psi))

    def logpmf(self, k):
        return nb2_logpmf(k, self.mu, self.psi)

    def _cdf(self, k):
        return nb2_cdf(k, self.mu, self.psi)

    def _sf(self, k):
        return nb2_sf(k, self.mu, self.psi)

    @property
    def mean(self):
        return self.mu

    @property
    def var(self):
        return self.mu * (1.0 + self.mu / self.psi)


_MARGIN_GRAMMAR = {
    "bernoulli": (Bernoulli, 1),
    "binomial": (Binomial, 2),
    "poisson": (Poisson, 1),
    "negbin": (NegBin, 2),
    "nb2": (NB2, 2),
}


def parse_margin(text: str) -> DiscreteMargin:
    """Parse ``name:p1[,p2]``, e.g. ``poisson:0.5`` or ``negbin:3,0.4``.

    ``binomial:n,p``, ``negbin:r,p`` (failures before ``r`` successes) and
    ``nb2:mu,psi`` take two parameters; ``bernoulli:p`` and ``poisson:lambda``
    take one.
    """
    name, sep, rest = str(text).strip().partition(":")
    name = name.strip().lower()
    if not sep or name not in _MARGIN_GRAMMAR:
        valid = ", ".join(_MARGIN_GRAMMAR)
        raise ValueError(f"malformed margin spec {text!r}; expected name:params with name in {valid}")
    cls, arity = _MARGIN_GRAMMAR[name]
    try:
        params = [float(p) for p in rest.split(",")]
    except ValueError:
        raise ValueError(f"malformed margin parameters in {text!r}") from None
    if len(params) != arity:
        raise ValueError(f"{name} takes {arity} parameter(s), got {len(params)} in {text!r}")
    return cls(*params)


def format_margin(margin: DiscreteMargin) -> str:
    """Inverse of :func:`parse_margin`."""
    if isinstance(margin, Bernoulli):
        return f"bernoulli:{float(margin.p)!r}"
    if isinstance(margin, Binomial):
        return f"binomial:{margin.n},{float(margin.p)!r}"
    if isinstance(margin, Poisson):
        return f"poisson:{float(margin.lam)!r}"
    if isinstance(margin, NegBin):
        return f"negbin:{float(margin.r)!r},{float(margin.p)!r}"
    if isinstance(margin, NB2):
        return f"nb2:{float(margin.mu)!r},{float(margin.psi)!r}"
    raise TypeError(type(margin))
