import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from countcopula.copulas import CopulaSpec, Family
from countcopula.dependence import BivariateCountModel
from countcopula.estimation import (
    THETA_BOUNDS,
    backward_elimination,
    chi_square_gof,
    copula_loglik,
    fit_copula_theta,
    fit_nb2_regression,
    fit_nb2_simple,
    frequency_table,
    ifm_fit,
    nb2_hessian,
    nb2_loglik,
    nb2_score,
    plug_in_dependence,
)
from countcopula.exceptions import DataError
from countcopula.margins import NB2, Poisson
from reference_values import IUD_COUNTS, IUD_PSI, NEGBIN, SMOKE_ONLY_FIT, SMOKERS_BY_STD, STD_COUNTS, STD_PSI


def smoke_only_data():
    """Per-patient (STDs, Smoke) rows rebuilt from the class-wise smoker counts."""
    y, smoke = [], []
    for k, (smokers, total) in enumerate(SMOKERS_BY_STD):
        y += [k] * total
        smoke += [1] * smokers + [0] * (total - smokers)
    y = np.array(y)
    Z = np.column_stack([np.ones(len(y)), smoke])
    return y, Z


def nb2_draw(rng, mu, psi):
    return rng.negative_binomial(psi, psi / (mu + psi))


# --- simple NB2 fits ------------------------------------------------------------


def test_frequency_table():
    np.testing.assert_array_equal(frequency_table([0, 2, 2, 3]), [1, 0, 2, 1])
    with pytest.raises(DataError):
        frequency_table([])
    with pytest.raises(DataError):
        frequency_table([1, -1])


@pytest.mark.parametrize("counts, mean, psi", [(STD_COUNTS, 103 / 667, STD_PSI), (IUD_COUNTS, 119 / 667, IUD_PSI)])
def test_nb2_simple_fit(counts, mean, psi):
    fit = fit_nb2_simple(counts)
    assert fit.mu == pytest.approx(mean, abs=1e-12)
    assert fit.psi == pytest.approx(psi, abs=0.01)
    assert fit.n == 667


def test_nb2_simple_is_a_maximum():
    fit = fit_nb2_simple(STD_COUNTS)
    k = np.arange(3)
    f = np.array(STD_COUNTS)

    def ll(mu, psi):
        return float(f @ NB2(mu, psi).logpmf(k))

    assert fit.loglik == pytest.approx(ll(fit.mu, fit.psi), abs=1e-9)
    for dm, dp in [(1e-3, 0), (-1e-3, 0), (0, 1e-3), (0, -1e-3)]:
        assert ll(fit.mu + dm, fit.psi + dp) <= fit.loglik + 1e-12


def test_nb2_simple_all_zero_rejected():
    with pytest.raises(DataError):
        fit_nb2_simple([10, 0, 0])


# --- NB2 regression -------------------------------------------------------------


def test_smoke_only_regression():
    y, Z = smoke_only_data()
    model, report = fit_nb2_regression(y, Z, ["intercept", "Smoke=1"])
    assert report.converged
    est = dict(zip(report.names, report.estimates))
    se = dict(zip(report.names, report.std_errors))
    pv = dict(zip(report.names, report.p_values))
    for name in ("intercept", "Smoke=1"):
        assert est[name] == pytest.approx(SMOKE_ONLY_FIT[name][0], abs=1e-3)
        assert se[name] == pytest.approx(SMOKE_ONLY_FIT[name][1], abs=1e-3)
    assert model.psi == pytest.approx(SMOKE_ONLY_FIT["dispersion"], abs=1e-3)
    assert report.minus2loglik == pytest.approx(SMOKE_ONLY_FIT["minus2loglik"], abs=0.01)
    assert report.aic == pytest.approx(SMOKE_ONLY_FIT["aic"], abs=0.01)
    assert pv["Smoke=1"] == pytest.approx(SMOKE_ONLY_FIT["smoke_p"], abs=1e-3)


def test_loglik_history_nondecreasing():
    y, Z = smoke_only_data()
    _, report = fit_nb2_regression(y, Z)
    assert np.all(np.diff(report.history) >= -1e-10)


def test_regression_permutation_invariant():
    y, Z = smoke_only_data()
    perm = np.random.default_rng(0).permutation(len(y))
    a, _ = fit_nb2_regression(y, Z)
    b, _ = fit_nb2_regression(y[perm], Z[perm])
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-6)
    assert a.psi == pytest.approx(b.psi, abs=1e-6)


def test_intercept_only_matches_simple_fit():
    counts = np.repeat(np.arange(3), STD_COUNTS)
    model, _ = fit_nb2_regression(counts, np.ones((len(counts), 1)), ["intercept"])
    simple = fit_nb2_simple(STD_COUNTS)
    assert np.exp(model.beta[0]) == pytest.approx(simple.mu, rel=1e-6)
    assert model.psi == pytest.approx(simple.psi, rel=1e-4)


def test_parameter_recovery():
    rng = np.random.default_rng(42)
    n = 5000
    Z = np.column_stack([np.ones(n), rng.integers(0, 2, n), rng.normal(size=n)])
    beta = np.array([0.3, -0.5, 0.4])
    y = nb2_draw(rng, np.exp(Z @ beta), 2.0)
    model, report = fit_nb2_regression(y, Z)
    assert report.converged
    se = report.std_errors[:3]
    assert np.all(np.abs(model.beta - beta) < 4 * se)
    assert model.psi == pytest.approx(2.0, rel=0.2)


def test_zero_effect_column_not_significant():
    rng = np.random.default_rng(7)
    n = 3000
    Z = np.column_stack([np.ones(n), rng.integers(0, 2, n)])
    y = nb2_draw(rng, np.full(n, 1.5), 1.0)
    model, report = fit_nb2_regression(y, Z)
    assert abs(model.beta[1]) < 4 * report.std_errors[1]


def test_rank_deficient_names_columns():
    y, Z = smoke_only_data()
    Z = np.column_stack([Z, 2 * Z[:, 1]])
    with pytest.raises(DataError, match="double"):
        fit_nb2_regression(y, Z, ["intercept", "Smoke=1", "double"])


def test_divergence_flagged():
    # perfect separation: the indicator row always has y = 0
    rng = np.random.default_rng(3)
    n = 400
    d = np.r_[np.ones(100), np.zeros(n - 100)]
    y = np.where(d == 1, 0, nb2_draw(rng, np.full(n, 2.0), 3.0))
    Z = np.column_stack([np.ones(n), d])
    with pytest.warns(RuntimeWarning):
        _, report = fit_nb2_regression(y, Z, max_iter=200)
    assert not report.converged
    assert report.message


def test_regression_input_validation():
    y, Z = smoke_only_data()
    with pytest.raises(DataError):
        fit_nb2_regression(y[:-1], Z)
    with pytest.raises(DataError):
        fit_nb2_regression(np.zeros(len(y)), Z)
    with pytest.raises(DataError):
        fit_nb2_regression(y - 0.5, Z)


def test_report_dict():
    y, Z = smoke_only_data()
    _, report = fit_nb2_regression(y, Z, ["intercept", "Smoke=1"])
    d = report.to_dict()
    assert [p["name"] for p in d["parameters"]] == ["intercept", "Smoke=1", "dispersion"]
    assert d["aic"] == pytest.approx(d["minus2loglik"] + 6)


def test_backward_elimination_drops_noise():
    rng = np.random.default_rng(11)
    n = 2000
    a = rng.integers(0, 2, n)
    noise = rng.integers(0, 2, n)
    y = nb2_draw(rng, np.exp(-0.5 + 1.0 * a), 1.0)
    Z = np.column_stack([np.ones(n), a, noise])
    _, report, dropped = backward_elimination(y, Z, ["intercept", "a", "noise"], alpha=0.01)
    assert "a" in report.names
    assert dropped in ([], ["noise"])
    if dropped:
        assert "noise" not in report.names


# --- analytic derivatives --------------------------------------------------------

_Y, _Z = None, None


def _derivative_data():
    global _Y, _Z
    if _Y is None:
        rng = np.random.default_rng(5)
        _Z = np.column_stack([np.ones(60), rng.normal(size=60), rng.integers(0, 2, 60)])
        _Y = nb2_draw(rng, np.exp(_Z @ [0.2, 0.3, -0.4]), 1.5).astype(float)
    return _Y, _Z


@settings(max_examples=50)
@given(
    b=st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3),
    log_psi=st.floats(np.log(0.05), np.log(20.0)),
)
def test_score_matches_finite_difference(b, log_psi):
    y, Z = _derivative_data()
    beta = np.array(b)
    psi = float(np.exp(log_psi))
    g = nb2_score(beta, psi, y, Z)
    x0 = np.r_[beta, psi]

    def f(x):
        return nb2_loglik(x[:3], x[3], y, Z)

    fd = np.empty(4)
    for j in range(4):
        h = 1e-6 * max(1.0, abs(x0[j]))
        e = np.zeros(4)
        e[j] = h
        fd[j] = (f(x0 + e) - f(x0 - e)) / (2 * h)
    np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-4)


@settings(max_examples=20)
@given(
    b=st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3),
    log_psi=st.floats(np.log(0.05), np.log(20.0)),
)
def test_hessian_matches_finite_difference(b, log_psi):
    y, Z = _derivative_data()
    beta = np.array(b)
    psi = float(np.exp(log_psi))
    H = nb2_hessian(beta, psi, y, Z)
    x0 = np.r_[beta, psi]
    fd = np.empty((4, 4))
    for j in range(4):
        h = 1e-6 * max(1.0, abs(x0[j]))
        e = np.zeros(4)
        e[j] = h
        fd[:, j] = (nb2_score((x0 + e)[:3], (x0 + e)[3], y, Z) - nb2_score((x0 - e)[:3], (x0 - e)[3], y, Z)) / (2 * h)
    np.testing.assert_allclose(H, fd, rtol=1e-4, atol=1e-3)


# --- copula parameter -------------------------------------------------------------


def draw_pairs(family, theta, n, seed, mx=NEGBIN, my=NEGBIN):
    model = BivariateCountModel(CopulaSpec(family, theta), mx, my)
    return model.sample(n, np.random.default_rng(seed))


@pytest.mark.parametrize("family, theta", [("frank", 3.0), ("clayton", 2.0), ("gumbel", 2.0), ("joe", 2.0), ("amh", 0.6)])
def test_theta_recovery(family, theta):
    pairs = draw_pairs(family, theta, 3000, 1)
    fit = fit_copula_theta(pairs, NEGBIN, NEGBIN, family)
    se_guess = {"frank": 0.25, "clayton": 0.2, "gumbel": 0.08, "joe": 0.12, "amh": 0.08}[family]
    assert fit.theta == pytest.approx(theta, abs=4 * se_guess)
    assert not fit.at_boundary


def test_fit_is_local_maximum():
    pairs = draw_pairs("frank", 3.0, 500, 2)
    fit = fit_copula_theta(pairs, NEGBIN, NEGBIN, "frank")
    for d in (-1e-3, 1e-3):
        assert copula_loglik(pairs, NEGBIN, NEGBIN, "frank", fit.theta + d) <= fit.loglik + 1e-9
    assert fit.loglik == pytest.approx(copula_loglik(pairs, NEGBIN, NEGBIN, "frank", fit.theta), abs=1e-9)


def test_independent_data_gives_small_theta():
    pairs = draw_pairs("independence", None, 3000, 3) if False else None
    rng = np.random.default_rng(3)
    pairs = np.column_stack([NEGBIN.quantile(rng.random(3000)), NEGBIN.quantile(rng.random(3000))])
    fit = fit_copula_theta(pairs, NEGBIN, NEGBIN, "frank")
    assert abs(fit.theta) < 0.35


def test_copula_fit_permutation_invariant():
    pairs = draw_pairs("gumbel", 1.7, 400, 4)
    perm = np.random.default_rng(0).permutation(len(pairs))
    a = fit_copula_theta(pairs, NEGBIN, NEGBIN, "gumbel")
    b = fit_copula_theta(pairs[perm], NEGBIN, NEGBIN, "gumbel")
    assert a.theta == b.theta
    assert a.loglik == b.loglik


def test_at_boundary_flag():
    # countermonotone data cannot be fitted by Gumbel, whose domain starts at independence
    rng = np.random.default_rng(5)
    u = rng.random(500)
    pairs = np.column_stack([NEGBIN.quantile(u), NEGBIN.quantile(1 - u * 0.999)])
    fit = fit_copula_theta(pairs, NEGBIN, NEGBIN, "gumbel")
    assert fit.at_boundary
    assert fit.theta == pytest.approx(THETA_BOUNDS[Family.GUMBEL][0], abs=1e-5)


def test_too_few_pairs():
    pairs = draw_pairs("frank", 2.0, 29, 6)
    with pytest.raises(DataError, match="at least 30"):
        fit_copula_theta(pairs, NEGBIN, NEGBIN, "frank")


def test_parameter_free_family_rejected():
    with pytest.raises(ValueError):
        fit_copula_theta(draw_pairs("frank", 2.0, 100, 6), NEGBIN, NEGBIN, "independence")


def test_per_row_margins_equal_shared_margin():
    pairs = draw_pairs("clayton", 1.5, 200, 8)
    shared = copula_loglik(pairs, NEGBIN, NEGBIN, "clayton", 1.5)
    nb2 = NB2(NEGBIN.mean, 3.0)
    rows = [nb2] * len(pairs)
    per_row = copula_loglik(pairs, rows, rows, "clayton", 1.5)
    assert per_row == pytest.approx(shared, abs=1e-8)


def test_per_row_margin_length_checked():
    pairs = draw_pairs("clayton", 1.5, 50, 8)
    with pytest.raises(ValueError):
        copula_loglik(pairs, [NB2(1.0, 1.0)] * 49, NEGBIN, "clayton", 1.5)


# --- chi-square goodness of fit ---------------------------------------------------


def test_chi_square_exact_fit():
    m = Poisson(1.0)
    probs = np.append(m.pmf(np.arange(3)), m.sf(2))
    res = chi_square_gof(1000 * probs, m)
    assert res.statistic == pytest.approx(0.0, abs=1e-12)
    assert res.p_value == pytest.approx(1.0, abs=1e-12)
    assert res.df == 3
    assert res.fitted_percent.sum() == pytest.approx(100.0)


def test_chi_square_tail_absorbed():
    res = chi_square_gof(STD_COUNTS, fit_nb2_simple(STD_COUNTS).margin)
    assert res.expected.sum() == pytest.approx(667, abs=1e-9)


def test_chi_square_df_rules():
    m = fit_nb2_simple(IUD_COUNTS).margin
    assert chi_square_gof(IUD_COUNTS, m).df == 4
    assert chi_square_gof(IUD_COUNTS, m, "cells-1-params", n_fitted=2).df == 2
    with pytest.raises(ValueError):
        chi_square_gof(IUD_COUNTS, m, "bogus")
    with pytest.raises(DataError):
        chi_square_gof(STD_COUNTS, m, "cells-1-params", n_fitted=2)


def test_chi_square_zero_expected_rejected():
    from countcopula.margins import Bernoulli

    with pytest.raises(DataError, match="zero"):
        chi_square_gof([5, 5, 1], Bernoulli(0.5))


def test_chi_square_fitted_counts():
    res = chi_square_gof(STD_COUNTS, fit_nb2_simple(STD_COUNTS).margin)
    np.testing.assert_allclose(res.expected, (600.77, 44.49, 21.74), atol=0.05)


# --- IFM -------------------------------------------------------------------------


def test_ifm_on_synthetic_data():
    rng = np.random.default_rng(9)
    n = 1500
    a = rng.integers(0, 2, n)
    Zx = np.column_stack([np.ones(n), a])
    Zy = np.ones((n, 1))
    mux = np.exp(-0.3 + 0.6 * a)
    cop = CopulaSpec("frank", 4.0)
    u, v = cop.sample(n, rng)
    x = np.array([NB2(m, 1.5).quantile(ui) for m, ui in zip(mux, u)])
    y = NB2(0.8, 2.0).quantile(v)
    res = ifm_fit(x, y, Zx, Zy, "frank", ["intercept", "a"], ["intercept"])
    assert res.converged
    assert res.theta == pytest.approx(4.0, abs=1.2)
    assert res.model_x.beta[1] == pytest.approx(0.6, abs=0.25)
    assert 0 < res.tau < res.rho
    assert res.aic == pytest.approx(res.minus2loglik + 2 * (3 + 2 + 1))
    tau, rho = plug_in_dependence(res.copula, res.margins_x, res.margins_y)
    assert (tau, rho) == (res.tau, res.rho)
