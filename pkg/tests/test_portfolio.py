import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from drokit.ctransform import ctransform_toland, log_metric_conjugate
from drokit.envelopes import UnivariateLoss
from drokit.errors import DomainError, InfiniteRegion
from drokit.portfolio import (
    CSV_COLUMNS,
    PortfolioExperimentConfig,
    PortfolioProblem,
    ctransform_numeric,
    ctransform_values,
    h,
    h_prime,
    portfolio_ctransform,
    portfolio_gradients,
    rows_to_csv,
    run_portfolio_experiment,
    solve_portfolio,
    solve_saa,
    summarize,
)


def random_instance(rng, d, slack=0.01):
    theta = rng.dirichlet(np.ones(d))
    zhat = rng.lognormal(0.0, 0.5, d)
    lam = 1.0 / d + slack + rng.exponential(2.0)
    return theta, lam, zhat


def scipy_oracle(theta, lam, zhat):
    """max over gamma < 0 of 1 + log(-gamma) + lam sum h(gamma u / lam), searched in log(-gamma)."""
    u = theta * zhat
    f = lambda t: -(1.0 + t + lam * float(np.sum(h(-math.exp(t) * u / lam))))
    grid = np.linspace(-25, 25, 2001)
    k = int(np.argmin([f(t) for t in grid]))
    res = minimize_scalar(f, bounds=(grid[max(k - 1, 0)], grid[min(k + 1, 2000)]),
                          method="bounded", options={"xatol": 1e-13})
    return -res.fun


def test_h_pieces():
    np.testing.assert_allclose(h([-3.0, -1.0, -0.5, 0.0]), [-1 - math.log(3), -1.0, -0.5, 0.0])
    assert h(0.1) == math.inf
    np.testing.assert_allclose(h_prime([-4.0, -0.5]), [0.25, 1.0])


def test_examples():
    r = portfolio_ctransform([1.0], 2.0, [1.0])
    assert (r.k, r.gamma_star) == (1, pytest.approx(-1.0))
    assert r.value == pytest.approx(0.0, abs=1e-15)
    assert portfolio_ctransform([0.5, 0.5], 0.4, [1.0, 2.0]).value == math.inf
    gt, gl = portfolio_gradients([1.0], 2.0, [1.0])
    assert gl == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=200)
@given(st.integers(0, 10**9), st.integers(1, 8))
def test_closed_form_matches_oracles(seed, d):
    rng = np.random.default_rng(seed)
    theta, lam, zhat = random_instance(rng, d)
    r = portfolio_ctransform(theta, lam, zhat)
    assert r.gamma_star < 0
    assert r.value >= -math.log(theta @ zhat) - 1e-12
    assert r.value == pytest.approx(scipy_oracle(theta, lam, zhat), abs=1e-8)
    assert r.value == pytest.approx(ctransform_numeric(theta, lam, zhat), abs=1e-8)


@settings(max_examples=20)
@given(st.integers(0, 10**9))
def test_closed_form_matches_toland(seed):
    rng = np.random.default_rng(seed)
    theta, lam, zhat = random_instance(rng, 4)
    r = portfolio_ctransform(theta, lam, zhat)
    L = UnivariateLoss.neg_log()
    t = ctransform_toland(L.conjugate, log_metric_conjugate(), theta, lam, zhat, L.conjugate_domain)
    assert t.value == pytest.approx(r.value, abs=1e-8)


@settings(max_examples=15)
@given(st.integers(0, 10**9))
def test_primal_brute_force_d2(seed):
    rng = np.random.default_rng(seed)
    theta, lam, zhat = random_instance(rng, 2, slack=0.2)
    # z_i = zhat_i exp(t_i); the loss only gains from shrinking returns, so t <= 0
    t = np.linspace(-12, 0, 1201)
    T1, T2 = np.meshgrid(t, t)
    val = (-np.log(theta[0] * zhat[0] * np.exp(T1) + theta[1] * zhat[1] * np.exp(T2))
           - lam * (np.abs(T1) + np.abs(T2)))
    r = portfolio_ctransform(theta, lam, zhat)
    assert val.max() <= r.value + 1e-9
    assert val.max() == pytest.approx(r.value, abs=1e-4)


def test_ties_do_not_change_value():
    theta = np.array([0.25, 0.25, 0.25, 0.25])
    zhat = np.array([1.2, 1.2, 0.8, 1.2])
    a = portfolio_ctransform(theta, 1.5, zhat).value
    b = portfolio_ctransform(theta[[3, 2, 1, 0]], 1.5, zhat[[3, 2, 1, 0]]).value
    assert a == pytest.approx(b, abs=1e-14)
    assert a == pytest.approx(scipy_oracle(theta, 1.5, zhat), abs=1e-9)


@settings(max_examples=50)
@given(st.integers(0, 10**9), st.integers(2, 6))
def test_gradients_match_central_differences(seed, d):
    rng = np.random.default_rng(seed)
    theta, lam, zhat = random_instance(rng, d, slack=0.1)
    eps = 0.3
    gt, gl = portfolio_gradients(theta, lam, zhat, eps)
    f = lambda th, la: la * eps + portfolio_ctransform(th, la, zhat).value
    step = 1e-6
    num_l = (f(theta, lam + step) - f(theta, lam - step)) / (2 * step)
    assert gl == pytest.approx(num_l, rel=1e-5, abs=1e-7)
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        num = (f(theta + e, lam) - f(theta - e, lam)) / (2 * step)
        assert gt[i] == pytest.approx(num, rel=1e-5, abs=1e-7)
    assert np.all(gt < 0)


@given(st.integers(0, 10**9))
def test_infinite_region(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 8))
    theta = rng.dirichlet(np.ones(d))
    lam = rng.uniform(0, 1.0 / d - 1e-6)
    zhat = rng.lognormal(size=d)
    assert portfolio_ctransform(theta, lam, zhat).value == math.inf
    with pytest.raises(InfiniteRegion):
        portfolio_gradients(theta, lam, zhat)


def test_domain_error():
    with pytest.raises(DomainError):
        portfolio_ctransform([0.5, 0.5], 1.0, [1.0, 0.0])


@given(st.integers(0, 10**9))
def test_convex_in_lambda(seed):
    rng = np.random.default_rng(seed)
    Z = rng.lognormal(0, 0.4, (5, 3))
    theta = rng.dirichlet(np.ones(3))
    a, b = np.sort(rng.uniform(1 / 3 + 1e-3, 6, 2))
    f = lambda lam: float(ctransform_values(theta, lam, Z).mean())
    assert f((a + b) / 2) <= (f(a) + f(b)) / 2 + 1e-10


def test_sparse_theta_threshold():
    # |theta|_0 = 1 for a vertex, so any lam >= 1 is finite
    r = portfolio_ctransform([1.0, 0.0, 0.0], 1.0, [1.1, 0.9, 1.3])
    assert math.isfinite(r.value)
    assert portfolio_ctransform([1.0, 0.0, 0.0], 0.99, [1.1, 0.9, 1.3]).value == math.inf


@pytest.mark.parametrize("seed", range(4))
def test_graal_matches_projected_gradient(seed):
    rng = np.random.default_rng(seed)
    Z = rng.lognormal(np.linspace(0, 0.1, 4), 0.7, (40, 4))
    prob = PortfolioProblem(Z, 0.05)
    a = solve_portfolio(prob, "graal", tol=1e-12)
    b = solve_portfolio(prob, "pg", tol=1e-12)
    assert a.value == pytest.approx(b.value, abs=1e-6)
    assert a.theta.sum() == pytest.approx(1.0, abs=1e-12) and np.all(a.theta >= 0)
    assert a.lam >= 1 / np.count_nonzero(a.theta > 1e-12)


def test_small_radius_matches_saa():
    rng = np.random.default_rng(5)
    Z = rng.lognormal(np.linspace(0, 0.1, 4), 0.7, (40, 4))
    saa = solve_saa(PortfolioProblem(Z, 0.0))
    dro = solve_portfolio(PortfolioProblem(Z, 1e-10))
    assert dro.value == pytest.approx(saa.value, abs=1e-5)
    assert solve_portfolio(PortfolioProblem(Z, 0.0)).solver == "saa"


def test_single_asset_against_lambda_search():
    rng = np.random.default_rng(6)
    Z = rng.lognormal(0.05, 0.3, (30, 1))
    eps = 0.2
    prob = PortfolioProblem(Z, eps)
    sol = solve_portfolio(prob)
    res = minimize_scalar(lambda lam: prob.objective(np.ones(1), lam), bounds=(1.0, 100.0),
                          method="bounded", options={"xatol": 1e-12})
    assert sol.value == pytest.approx(res.fun, abs=1e-7)
    np.testing.assert_array_equal(sol.theta, [1.0])


def test_robust_portfolio_diversifies():
    rng = np.random.default_rng(7)
    mean = np.array([0.15, 0.0, 0.0, 0.0])
    Z = rng.lognormal(mean, 0.3, (60, 4))
    saa = solve_saa(PortfolioProblem(Z, 0.0))
    dro = solve_portfolio(PortfolioProblem(Z, 0.05))
    uniform = np.full(4, 0.25)
    assert np.linalg.norm(dro.theta - uniform) < np.linalg.norm(saa.theta - uniform)


def test_experiment_harness():
    cfg = PortfolioExperimentConfig(d=3, n_train=20, n_test=2000, n_trials=2, eps_grid=(0.0, 0.05, 0.5))
    rows = run_portfolio_experiment(cfg)
    assert len(rows) == 6
    assert rows == run_portfolio_experiment(cfg)
    text = rows_to_csv(rows)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    summary = summarize(rows)
    assert summary[0.0]["diff_mean"] == 0.0
    assert set(summary) == {0.0, 0.05, 0.5}


def test_experiment_single_asset_is_constant():
    cfg = PortfolioExperimentConfig(d=1, n_train=10, n_test=100, n_trials=1, eps_grid=(0.0, 0.1, 1.0),
                                    mean=[0.05], cov=[[0.1]])
    rows = run_portfolio_experiment(cfg)
    assert len({r[2] for r in rows}) == 1
