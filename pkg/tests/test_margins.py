import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from countcopula.margins import NB2, Bernoulli, Binomial, NegBin, Poisson, format_margin, parse_margin

MARGINS = [
    Bernoulli(0.4),
    Binomial(5, 0.3),
    Poisson(0.5),
    Poisson(30.0),
    NegBin(3, 0.4),
    NegBin(0.7, 0.1),
    NB2(0.1544, 0.1421),
    NB2(12.0, 2.5),
]


def mid(m):
    return type(m).__name__ + format_margin(m).split(":")[1]


# --- construction ------------------------------------------------------------


@pytest.mark.parametrize(
    "ctor, args",
    [
        (Bernoulli, (0.0,)),
        (Bernoulli, (1.0,)),
        (Binomial, (0, 0.5)),
        (Binomial, (2.5, 0.5)),
        (Poisson, (0.0,)),
        (Poisson, (-1.0,)),
        (NegBin, (0.0, 0.5)),
        (NegBin, (3.0, 1.0)),
        (NB2, (0.0, 1.0)),
        (NB2, (1.0, 0.0)),
        (Poisson, (float("nan"),)),
    ],
)
def test_invalid_parameters_rejected(ctor, args):
    with pytest.raises(ValueError):
        ctor(*args)


# --- pmf / cdf examples ------------------------------------------------------


def test_bernoulli_pmf():
    assert Bernoulli(0.4).pmf(1) == pytest.approx(0.4)
    assert Bernoulli(0.4).pmf(0) == pytest.approx(0.6)
    assert Bernoulli(0.4).pmf(2) == 0.0


def test_nb2_zero_mass_matches_fitted_count():
    # fitted count 600.77 of 667
    assert NB2(0.1544, 0.1421).pmf(0) == pytest.approx(600.77 / 667, abs=5e-4)


def test_negbin_zero_mass():
    assert NegBin(3, 0.4).pmf(0) == pytest.approx(0.064, abs=1e-15)


def test_cdf_below_support():
    for m in MARGINS:
        assert m.cdf(-1) == 0.0
        assert m.cdf(-7) == 0.0


def test_bernoulli_cdf():
    assert Bernoulli(0.4).cdf(0) == pytest.approx(0.6)
    assert Bernoulli(0.4).cdf(1) == 1.0


def test_poisson_cdf_constant():
    # e^{-0.5} * 1.5 = 0.9097959895689501..., cross-checked with mpmath
    assert Poisson(0.5).cdf(1) == pytest.approx(0.9097959895689501, abs=1e-15)
    assert Poisson(0.5).cdf(1) == pytest.approx(0.909796, abs=5e-7)


@pytest.mark.parametrize("m", MARGINS, ids=mid)
def test_pmf_matches_scipy(m):
    k = np.arange(0, 60)
    if isinstance(m, Bernoulli):
        ref = stats.bernoulli(m.p)
    elif isinstance(m, Binomial):
        ref = stats.binom(m.n, m.p)
    elif isinstance(m, Poisson):
        ref = stats.poisson(m.lam)
    elif isinstance(m, NegBin):
        ref = stats.nbinom(m.r, m.p)
    else:
        ref = stats.nbinom(m.psi, m.psi / (m.mu + m.psi))
    np.testing.assert_allclose(m.pmf(k), ref.pmf(k), rtol=1e-10, atol=1e-300)
    np.testing.assert_allclose(m.cdf(k), ref.cdf(k), rtol=1e-10)


@pytest.mark.parametrize("m", MARGINS, ids=mid)
def test_cdf_is_cumulative_pmf(m):
    k = np.arange(0, m.truncation_point(1e-12) + 1)
    np.testing.assert_allclose(m.cdf(k), np.cumsum(m.pmf(k)), atol=1e-13)


@pytest.mark.parametrize("m", MARGINS, ids=mid)
def test_cdf_plus_sf_is_one(m):
    k = np.arange(0, 50)
    np.testing.assert_allclose(m.cdf(k) + m.sf(k), 1.0, atol=1e-14)


@pytest.mark.parametrize("m", MARGINS, ids=mid)
def test_normalisation_after_truncation(m):
    K = m.truncation_point(1e-12)
    total = float(np.sum(m.pmf(np.arange(K + 1))))
    assert 1.0 - 1e-11 <= total <= 1.0 + 1e-14


@pytest.mark.parametrize("m", MARGINS, ids=mid)
def test_cdf_nondecreasing(m):
    assert np.all(np.diff(m.cdf(np.arange(-3, 100))) >= 0.0)


def test_large_k_stays_finite():
    m = NegBin(3, 0.4)
    assert np.isfinite(m.logpmf(10_000))
    assert 0.0 <= m.pmf(10_000) < 1e-300
    assert m.cdf(10_000) == 1.0


# --- moments -----------------------------------------------------------------


def test_nb2_variance():
    m = NB2(2.0, 0.5)
    assert m.var == pytest.approx(2.0 * (1 + 2.0 / 0.5))


@pytest.mark.parametrize("m", MARGINS, ids=mid)
def test_moments_match_pmf(m):
    k = np.arange(0, m.truncation_point(1e-14) + 1)
    p = m.pmf(k)
    mean = float(k @ p)
    assert m.mean == pytest.approx(mean, rel=1e-9)
    assert m.var == pytest.approx(float((k - mean) ** 2 @ p), rel=1e-8)


@pytest.mark.parametrize("m", MARGINS, ids=mid)
def test_quantile_sampling_mean(m):
    rng = np.random.default_rng(11)
    draws = m.quantile(rng.random(100_000))
    se = math.sqrt(m.var / 100_000)
    assert abs(draws.mean() - m.mean) < 3 * se


# --- quantile ----------------------------------------------------------------


def test_bernoulli_quantiles():
    assert Bernoulli(0.4).quantile(0.5) == 0
    assert Bernoulli(0.4).quantile(0.7) == 1
    assert Bernoulli(0.4).quantile(0.0) == 0


def test_poisson_quantile_brute_force():
    m = Poisson(0.5)
    k = 0
    while m.cdf(k) < 0.95:
        k += 1
    assert m.quantile(0.95) == k


@pytest.mark.parametrize("q", [1.0, 1.5, -0.1])
def test_quantile_rejects_outside(q):
    with pytest.raises(ValueError):
        Poisson(1.0).quantile(q)


@given(q=st.floats(min_value=1e-9, max_value=1 - 1e-9), m=st.sampled_from(MARGINS))
def test_quantile_galois(q, m):
    k = int(m.quantile(q))
    assert m.cdf(k) >= q
    assert k == 0 or m.cdf(k - 1) < q


@given(k=st.integers(0, 40), m=st.sampled_from(MARGINS))
def test_quantile_of_cdf(k, m):
    c = float(m.cdf(k))
    if c < 1.0:
        assert m.quantile(c) <= k


def test_quantile_vectorised():
    q = np.array([0.1, 0.5, 0.99])
    out = NegBin(3, 0.4).quantile(q)
    assert out.shape == (3,)
    assert [NegBin(3, 0.4).quantile(x) for x in q] == list(out)


# --- truncation --------------------------------------------------------------


def test_truncation_finite_supports():
    assert Bernoulli(0.3).truncation_point(1e-12) == 1
    assert Bernoulli(0.3).truncation_point(0.01) == 1
    assert Binomial(5, 0.9).truncation_point(1e-12) <= 5


def test_truncation_poisson_thirty():
    m = Poisson(30.0)
    k = m.truncation_point(1e-12)
    assert m.sf(k) <= 1e-12
    assert m.sf(k - 1) > 1e-12


@pytest.mark.parametrize("tail", [0.0, 0.02, -1e-3])
def test_truncation_tail_domain(tail):
    with pytest.raises(ValueError):
        Poisson(1.0).truncation_point(tail)


@given(tail=st.floats(min_value=1e-14, max_value=0.01), m=st.sampled_from(MARGINS))
def test_truncation_bounds_tail(tail, m):
    assert m.sf(m.truncation_point(tail)) <= tail


# --- reparameterisation --------------------------------------------------------


@given(r=st.floats(0.05, 50.0), p=st.floats(0.01, 0.99))
def test_nb2_equals_negbin(r, p):
    nb = NegBin(r, p)
    nb2 = NB2(r * (1 - p) / p, r)
    k = np.arange(0, 40)
    np.testing.assert_allclose(nb2.pmf(k), nb.pmf(k), atol=1e-12, rtol=1e-10)


# --- spec grammar ------------------------------------------------------------


@pytest.mark.parametrize(
    "text, expected",
    [
        ("poisson:0.5", Poisson(0.5)),
        ("negbin:3,0.4", NegBin(3, 0.4)),
        ("bernoulli:0.5", Bernoulli(0.5)),
        ("nb2:0.15,0.14", NB2(0.15, 0.14)),
        ("binomial:5,0.2", Binomial(5, 0.2)),
        (" Poisson : 2 ", Poisson(2.0)),
    ],
)
def test_parse_margin(text, expected):
    assert parse_margin(text) == expected


@pytest.mark.parametrize("text", ["poisson", "poisson:", "pois:1", "negbin:3", "negbin:a,b", "poisson:-1", "binomial:2.5,0.3"])
def test_parse_margin_rejects(text):
    with pytest.raises(ValueError):
        parse_margin(text)


@pytest.mark.parametrize("m", MARGINS, ids=mid)
def test_format_round_trip(m):
    assert parse_margin(format_margin(m)) == m
