import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.linear_model import Lasso

from increff.errors import RankDeficient, TooFewRows
from increff.regress import (fold_ids, kkt_violation, lasso_cv, lasso_fit, lasso_objective, ols_fit)

# ---------------------------------------------------------------- OLS


def test_ols_exact_fit():
    fit = ols_fit([[1.0], [2.0]], [2.0, 4.0])
    np.testing.assert_allclose(fit.beta, [2.0])
    np.testing.assert_allclose(fit.residuals, 0.0, atol=1e-14)


def test_ols_consistent_system():
    fit = ols_fit([[1, 0], [0, 1], [1, 1]], [1, 1, 2])
    np.testing.assert_allclose(fit.beta, [1, 1])


def test_ols_collinear_columns():
    with pytest.raises(RankDeficient) as info:
        ols_fit([[1, 1], [2, 2], [3, 3]], [1, 2, 3])
    assert info.value.effective_rank == 1


def test_ols_needs_more_rows_than_columns():
    with pytest.raises(TooFewRows):
        ols_fit([[1.0, 0.0], [2.0, 1.0]], [2.0, 4.0])


def test_ols_matches_lstsq_and_is_orthogonal(rng):
    X = rng.normal(size=(60, 5))
    y = rng.normal(size=60)
    fit = ols_fit(X, y)
    ref = np.linalg.lstsq(X, y, rcond=None)[0]
    np.testing.assert_allclose(fit.beta, ref, rtol=1e-10)
    np.testing.assert_allclose(X.T @ fit.residuals, 0.0, atol=1e-10)
    np.testing.assert_allclose(fit.xtx_inv, np.linalg.inv(X.T @ X), rtol=1e-9)
    assert fit.sigma2_hat == pytest.approx(fit.residuals @ fit.residuals / 55)


def test_ols_reparameterization_invariance(rng):
    X = rng.normal(size=(40, 4))
    y = rng.normal(size=40)
    A = rng.normal(size=(4, 4)) + 3 * np.eye(4)
    f1, f2 = ols_fit(X, y), ols_fit(X @ A, y)
    np.testing.assert_allclose(f2.residuals, f1.residuals, atol=1e-10)
    np.testing.assert_allclose(A @ f2.beta, f1.beta, rtol=1e-9, atol=1e-12)
    # variance of a contrast is invariant as well: c' beta = (A' c)' beta_A
    c = rng.normal(size=4)
    v1 = c @ f1.xtx_inv @ c
    ca = A.T @ c
    assert ca @ f2.xtx_inv @ ca == pytest.approx(v1, rel=1e-8)


# ---------------------------------------------------------------- lasso


def _problem(rng, n=80, p=12, k=3):
    X = rng.normal(size=(n, p))
    beta = np.zeros(p)
    beta[:k] = [2.0, -1.5, 1.0][:k]
    return X, X @ beta + rng.normal(size=n)


def test_lasso_zero_penalty_is_ols(rng):
    X, y = _problem(rng)
    np.testing.assert_allclose(lasso_fit(X, y, 0.0).beta, ols_fit(X, y).beta, atol=1e-6)


def test_lasso_above_threshold_is_zero(rng):
    X, y = _problem(rng)
    lam_max = np.max(np.abs(X.T @ y)) / X.shape[0]
    fit = lasso_fit(X, y, lam_max, standardize=False)
    np.testing.assert_array_equal(fit.beta, 0.0)
    assert np.any(lasso_fit(X, y, 0.99 * lam_max, standardize=False).beta != 0)


@pytest.mark.parametrize("lam", [0.0, 0.3, 0.9, 2.5])
def test_lasso_soft_threshold_one_column(rng, lam):
    x = rng.normal(size=50)
    x /= np.sqrt(np.mean(x ** 2))
    y = 1.2 * x + rng.normal(size=50)
    z = x @ y / 50
    expected = np.sign(z) * max(abs(z) - lam, 0.0)
    fit = lasso_fit(x[:, None], y, lam, standardize=False)
    assert fit.beta[0] == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("lam", [0.02, 0.1, 0.4])
def test_lasso_matches_sklearn(rng, lam):
    X, y = _problem(rng, n=120, p=30)
    ours = lasso_fit(X, y, lam, standardize=False, tol=1e-12)
    ref = Lasso(alpha=lam, fit_intercept=False, tol=1e-12, max_iter=100_000).fit(X, y).coef_
    np.testing.assert_allclose(ours.beta, ref, atol=1e-6)


def test_unpenalized_intercept_matches_sklearn(rng):
    X, y = _problem(rng, n=100, p=20)
    y = y + 4.0
    D = np.column_stack([np.ones(100), X])
    w = np.r_[0.0, np.ones(20)]
    ours = lasso_fit(D, y, 0.1, penalty_weights=w, standardize=False, tol=1e-12)
    ref = Lasso(alpha=0.1, fit_intercept=True, tol=1e-12, max_iter=100_000).fit(X, y)
    np.testing.assert_allclose(ours.beta[1:], ref.coef_, atol=1e-6)
    assert ours.beta[0] == pytest.approx(ref.intercept_, abs=1e-6)


def test_high_dimensional_kkt(rng):
    X, y = _problem(rng, n=60, p=200)
    lam = 0.05
    fit = lasso_fit(X, y, lam)
    assert fit.converged
    assert kkt_violation(X, fit) < 1e-5


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.005, 1.0), st.booleans())
def test_kkt_and_objective_monotone(seed, lam, standardize):
    r = np.random.default_rng(seed)
    X = r.normal(size=(40, 15)) * r.uniform(0.2, 3.0, 15)
    y = X[:, 0] - 0.5 * X[:, 3] + r.normal(size=40)
    fit = lasso_fit(X, y, lam, standardize=standardize, record_objective=True)
    assert kkt_violation(X, fit) < 1e-5
    trace = fit.objective_trace
    assert np.all(np.diff(trace) <= 1e-12 * max(1.0, abs(trace[0])))
    obj = lasso_objective(X, y, fit.beta, lam, scale=fit.scale)
    assert trace[-1] == pytest.approx(obj, rel=1e-9, abs=1e-12)


def test_lasso_objective_beats_perturbations(rng):
    X, y = _problem(rng, n=50, p=8)
    fit = lasso_fit(X, y, 0.2, standardize=False, tol=1e-12)
    best = lasso_objective(X, y, fit.beta, 0.2)
    for _ in range(50):
        b = fit.beta + rng.normal(scale=1e-3, size=8)
        assert lasso_objective(X, y, b, 0.2) >= best - 1e-12


# ---------------------------------------------------------------- cross-validation


def test_fold_ids_balanced_and_seeded():
    a = fold_ids(103, 10, 5)
    assert np.array_equal(a, fold_ids(103, 10, 5))
    counts = np.bincount(a)
    assert counts.max() - counts.min() <= 1


def test_cv_is_bitwise_deterministic(rng):
    X, y = _problem(rng)
    a = lasso_cv(X, y, rng_seed=4)
    b = lasso_cv(X, y, rng_seed=4)
    assert np.array_equal(a.cv_error, b.cv_error)
    assert a.lambda_min == b.lambda_min
    assert a.lambda_min in a.lambda_grid
    assert np.all(np.isfinite(a.cv_error))
    assert np.all(np.diff(a.lambda_grid) < 0)


def test_cv_patience_prefix_agrees_with_full_grid(rng):
    X, y = _problem(rng, n=100, p=40)
    full = lasso_cv(X, y, rng_seed=1)
    short = lasso_cv(X, y, rng_seed=1, patience=5)
    m = short.lambda_grid.size
    assert m <= full.lambda_grid.size
    np.testing.assert_array_equal(short.lambda_grid, full.lambda_grid[:m])
    np.testing.assert_allclose(short.cv_error, full.cv_error[:m], rtol=1e-8)


def test_cv_keeps_strong_signal(rng):
    X, y = _problem(rng, n=200, p=30, k=1)
    cv = lasso_cv(X, y, rng_seed=0)
    fit = lasso_fit(X, y, cv.lambda_min)
    assert fit.beta[0] != 0


def test_cv_pure_noise_prefers_heavy_penalty():
    # Monte Carlo over seeds: with y independent of X the selected penalty sits
    # in the upper half of the (log-spaced) grid in most replications
    upper = 0
    for seed in range(20):
        r = np.random.default_rng(seed)
        X, y = r.normal(size=(400, 20)), r.normal(size=400)
        cv = lasso_cv(X, y, rng_seed=seed)
        upper += cv.index_min < cv.lambda_grid.size // 2
    assert upper >= 16
