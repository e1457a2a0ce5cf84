import numpy as np
import pytest
from scipy import stats

from increff.basis import cubic_basis, expand, mean_derivatives, parse_basis
from increff.data import Dataset
from increff.dgp import generate, make_spec, sparse_basis_text
from increff.errors import DegenerateContrast, DegenerateProjection
from increff.orthodespar import despar_estimate, despar_with_cv, orthogonalize, orthogonalize_contrast
from increff.plugin import ate_plugin, incremental_plugin
from increff.regress import ols_fit


def _ed(text, t, x=None, y=None):
    t = np.asarray(t, dtype=float)
    x = np.zeros((t.size, 0)) if x is None else np.asarray(x, dtype=float)
    y = np.zeros(t.size) if y is None else np.asarray(y, dtype=float)
    return expand(Dataset(y, t, x), parse_basis(text))


def _cubic_sample(seed, n=200):
    ds, oracle = generate(make_spec("GaussianCubic", n, seed=seed))
    return expand(ds.without_oracle(), cubic_basis(1)), ds.y, oracle, ds


# ---------------------------------------------------------------- transform


def test_symmetric_sample_keeps_square():
    td = orthogonalize(_ed("t + t^2", [1.0, -1.0]))
    np.testing.assert_array_equal(td.xt[:, 0], [1, -1])
    np.testing.assert_array_equal(td.xt[:, 1], [1, 1])


def test_two_point_sample_cancels_square():
    td = orthogonalize(_ed("t + t^2", [0.0, 2.0]))
    assert td.alpha[1] == 2.0
    np.testing.assert_array_equal(td.xt[:, 1], [0, 0])


def test_reconstruction_identity():
    ed, _, _, _ = _cubic_sample(0)
    td = orthogonalize(ed)
    a = td.alpha.copy()
    a[td.treatment_col] = 0.0
    np.testing.assert_allclose(td.xt + np.outer(ed.t, a), ed.design, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(td.xt[:, td.treatment_col], ed.t)
    np.testing.assert_array_equal(td.alpha, mean_derivatives(ed))
    assert td.alpha[td.intercept_col] == 0.0


def test_transformed_ols_slope_is_plugin():
    ed, y, _, _ = _cubic_sample(1)
    td = orthogonalize(ed)
    fit = ols_fit(td.xt, y)
    assert fit.beta[td.treatment_col] == pytest.approx(incremental_plugin(ed, y).point, rel=1e-10)
    np.testing.assert_allclose(td.xt @ fit.beta, ed.design @ ols_fit(ed.design, y).beta, atol=1e-9)


def test_contrast_transform_rejects_equal_points():
    ed, _, _, _ = _cubic_sample(0, n=20)
    with pytest.raises(DegenerateContrast):
        orthogonalize_contrast(ed, 0.3, 0.3)


def test_score_orthogonality_at_large_n():
    # E[(b_k - t alpha_k) * dlog p(t|x)/dt] = 0 by integration by parts
    ed, _, oracle, ds = _cubic_sample(11, n=10_000)
    td = orthogonalize(ed)
    score = oracle.score_obs(ds.t, ds.x)
    for k in range(2, td.p):
        prod = td.xt[:, k] * score
        assert abs(prod.mean()) <= 3 * prod.std(ddof=1) / np.sqrt(prod.size)


# ---------------------------------------------------------------- estimator


def test_unpenalized_despar_is_plugin():
    ed, y, _, _ = _cubic_sample(2)
    res = despar_estimate(orthogonalize(ed), y, 0.0, 0.0)
    assert res.beta1_despar == pytest.approx(incremental_plugin(ed, y).point, rel=1e-8)


def test_unpenalized_contrast_despar_is_ate_plugin():
    ed, y, _, _ = _cubic_sample(3)
    res = despar_estimate(orthogonalize_contrast(ed, 0.5, -1.0), y, 0.0, 0.0)
    ref = ate_plugin(ed, y, 0.5, -1.0)
    assert res.ci.estimand == "Ate"
    assert res.ci.point == pytest.approx(ref.point, rel=1e-8)
    assert res.beta1_despar == pytest.approx(ref.point / 1.5, rel=1e-8)


@pytest.mark.parametrize("lam", [0.0, 0.5])
def test_single_column_is_origin_slope(rng, lam):
    t = rng.normal(size=30)
    y = 2 * t + rng.normal(size=30)
    res = despar_estimate(orthogonalize(_ed("t", t)), y, lam, 0.3)
    np.testing.assert_array_equal(res.z_tilde, t)
    assert res.beta1_despar == pytest.approx(t @ y / (t @ t), rel=1e-12)


def test_noiseless_variance_is_derivative_spread(rng):
    t, x = rng.normal(size=60), rng.normal(size=(60, 1))
    ed = expand(Dataset(np.zeros(60), t, x), cubic_basis(1))
    td = orthogonalize(ed)
    beta = np.array([0.5, 3.0, 1.0, -0.2, 1.0, 0.4])
    y = td.xt @ beta
    res = despar_estimate(td, y, 0.0, 0.0)
    np.testing.assert_allclose(res.beta_hat.beta, beta, atol=1e-8)
    assert res.beta1_despar == pytest.approx(3.0, abs=1e-8)
    # residuals are zero up to the coordinate-descent tolerance
    assert np.abs(res.beta_hat.residuals).max() < 1e-6
    assert res.u_hat2 == pytest.approx(np.var(ed.deriv @ res.beta_hat.beta), rel=1e-6)


def test_variance_formula_and_centered_form_agree(rng):
    ds, _ = generate(make_spec("SparseHighDim", 150, seed=4))
    ed = expand(ds.without_oracle(), parse_basis(sparse_basis_text()))
    td = orthogonalize(ed)
    res = despar_estimate(td, ds.y, 0.05, 0.05)
    assert res.u_hat2 == pytest.approx(res.u_hat2_alt, rel=1e-10)
    # independent evaluation of the per-unit influence terms
    b = res.beta_hat.beta
    eps = ds.y - td.xt @ b
    z = res.z_tilde
    xi = eps * z / (z @ td.xt[:, td.treatment_col] / td.n) + ed.deriv @ b
    assert res.u_hat2 == pytest.approx(np.var(xi), rel=1e-9)
    # adding a constant to every term leaves the variance unchanged
    assert np.var(xi + 12.3) == pytest.approx(res.u_hat2, rel=1e-9)
    assert np.isfinite(res.std_error) and res.std_error > 0


def test_normal_interval(rng):
    ed, y, _, _ = _cubic_sample(5)
    res = despar_estimate(orthogonalize(ed), y, 0.01, 0.01, level=0.9)
    half = stats.norm.ppf(0.95) * np.sqrt(res.u_hat2 / ed.n)
    assert res.ci.ci_upper - res.ci.point == pytest.approx(half, rel=1e-12)
    assert res.ci.estimand == "IncrementalSp"


def test_degenerate_projection(rng):
    t = rng.normal(size=40)
    x = np.column_stack([t])
    ed = expand(Dataset(rng.normal(size=40), t, x), parse_basis("1 + t + x1"))
    with pytest.raises(DegenerateProjection):
        despar_estimate(orthogonalize(ed), ed.design[:, 1], 0.0, 0.0)


def test_cv_pipeline_is_deterministic():
    ed, y, _, _ = _cubic_sample(6)
    td = orthogonalize(ed)
    a, b = despar_with_cv(td, y, seed=9), despar_with_cv(td, y, seed=9)
    assert a.beta1_despar == b.beta1_despar and a.u_hat2 == b.u_hat2
    np.testing.assert_array_equal(a.beta_hat.beta, b.beta_hat.beta)
    np.testing.assert_array_equal(a.cv_beta.cv_error, b.cv_beta.cv_error)


@pytest.mark.slow
def test_low_dimensional_pipeline_centers_on_population_effect():
    # theta_sp = E[3 + 2T] = 3 in the Gaussian cubic scenario
    inside = 0
    for rep in range(200):
        ed, y, _, _ = _cubic_sample(1000 + rep, n=500)
        res = despar_with_cv(orthogonalize(ed), y, seed=rep)
        inside += abs(res.beta1_despar - 3.0) <= 3 * res.std_error
    assert inside >= 190
