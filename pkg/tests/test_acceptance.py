"""End-to-end acceptance checks.

Each test prints a single ``ACCEPTANCE <k> PASS|FAIL`` line and then asserts.
The heavy Monte Carlo runs are marked ``slow``; ``INCREFF_THREADS`` sets the
worker count and does not change any result.
"""

import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from increff.basis import expand, parse_basis
from increff.config import ExperimentConfig
from increff.data import Dataset
from increff.dgp import make_spec, oracle_for, prop1_check
from increff.montecarlo import paired_mse_gap, run_table
from increff.orthodespar import despar_with_cv, orthogonalize
from increff.sensitivity import sensitivity_bound

ROOT = Path(__file__).resolve().parents[1]
SMALL_N = (10, 20, 50)
SPARSE_N = (200, 400, 600, 1000)

# reference cells per sample size: coverage, mean CI length, RMSE
GAUSSIAN_CELLS = {
    "incremental": {"coverage": (0.96, 0.96, 0.94), "ci_length": (0.87, 0.31, 0.15),
                    "rmse": (0.20, 0.08, 0.04)},
    "ate": {"coverage": (0.95, 0.94, 0.93), "ci_length": (1.09, 0.45, 0.23),
            "rmse": (0.25, 0.11, 0.06)},
}
HEAVY_TAIL_CELLS = {
    "incremental": {"coverage": (0.96, 0.96, 0.96), "ci_length": (0.66, 0.24, 0.11),
                    "rmse": (0.14, 0.06, 0.03)},
    "ate": {"coverage": (0.95, 0.97, 0.95), "ci_length": (0.87, 0.34, 0.16),
            "rmse": (0.18, 0.08, 0.04)},
}
SPARSE_RMSE_INCR = (0.72, 0.42, 0.22, 0.11)


def _verdict(capsys, k, title, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {k:>2} {'PASS' if ok else 'FAIL'} {title}: {detail}")
    assert ok, detail


def _plugin_table(scenario, reps=1000, ns=SMALL_N):
    return run_table(ExperimentConfig(scenario=scenario, n=ns, reps=reps, seed=0, estimand="both",
                                      t=0.5, t_prime=-0.5, method="ols-plugin"))


def _cell_misses(summary, cells):
    """Cells outside +-0.02 (coverage) or +-20% (length, RMSE)."""
    misses = []
    for est, by_key in cells.items():
        for key, refs in by_key.items():
            for n, ref in zip(SMALL_N, refs):
                got = getattr(summary.row(n, est), key)
                ok = abs(got - ref) <= 0.02 + 1e-12 if key == "coverage" else abs(got / ref - 1) <= 0.2
                if not ok:
                    misses.append(f"{est} {key} n={n}: {got:.3f} vs {ref}")
    return misses


def _table_detail(summary, cells):
    misses = _cell_misses(summary, cells)
    total = sum(len(v) for by_key in cells.values() for v in by_key.values())
    return misses, f"{total - len(misses)}/{total} cells in tolerance" + (
        "; outside: " + "; ".join(misses) if misses else "")


@pytest.mark.slow
def test_acceptance_01_gaussian_cubic_plugin_cells(capsys):
    s = _plugin_table("GaussianCubic")
    misses, detail = _table_detail(s, GAUSSIAN_CELLS)
    _verdict(capsys, 1, "Gaussian cubic plug-in cells (1000 reps)", not misses, detail)


@pytest.mark.slow
def test_acceptance_02_heavy_tail_plugin_cells(capsys):
    s = _plugin_table("HeavyTailCubic")
    misses, detail = _table_detail(s, HEAVY_TAIL_CELLS)
    order = all(s.row(n, "incremental").rmse < s.row(n, "ate").rmse for n in SMALL_N)
    detail += f"; incremental RMSE below ATE RMSE at every n: {order}"
    _verdict(capsys, 2, "t4 cubic plug-in cells (1000 reps)", not misses and order, detail)


@pytest.mark.slow
def test_acceptance_03_incremental_mse_below_ate_mse(capsys):
    s = _plugin_table("GaussianCubic", reps=2000, ns=(50, 200))
    parts, ok = [], True
    for n in (50, 200):
        gap, se = paired_mse_gap(s, n)
        ok &= gap <= 2 * se
        parts.append(f"n={n}: MSE(incr)-MSE(ATE) = {gap:.2e} (2 SE = {2 * se:.2e})")
    _verdict(capsys, 3, "variance ordering, Gaussian design, |t-t'|=1", ok, "; ".join(parts))


def _sparse_check(capsys, k, title, params):
    cfg = ExperimentConfig(scenario="SparseHighDim", n=SPARSE_N, reps=300, seed=0, estimand="both",
                           method="despar", patience=10, params=params)
    s = run_table(cfg)
    incr = [s.row(n, "incremental").rmse for n in SPARSE_N]
    ate = [s.row(n, "ate").rmse for n in SPARSE_N]
    dominance = all(a < b for a, b in zip(incr, ate))
    monotone = all(b < a for a, b in zip(incr, incr[1:]))
    factor = all(0.5 <= got / ref <= 2.0 for got, ref in zip(incr, SPARSE_RMSE_INCR))
    detail = (f"RMSE incr {', '.join(f'{v:.3f}' for v in incr)}; ATE {', '.join(f'{v:.3f}' for v in ate)}; "
              f"dominance {dominance}, decreasing {monotone}, within factor 2 {factor}")
    return dominance, monotone, factor, detail


@pytest.mark.slow
def test_acceptance_04_sparse_despar_trend(capsys):
    d, m, f, detail = _sparse_check(capsys, 4, "sparse", {})
    d5, _, _, detail5 = _sparse_check(capsys, 4, "sparse t3", {"noise": "t3"})
    _verdict(capsys, 4, "sparse desparsified pipeline (300 reps, Gaussian and t3 noise)",
             d and m and f and d5, f"Gaussian: {detail} | t3: {detail5}")


@pytest.mark.slow
def test_acceptance_05_heteroscedastic_reversal(capsys):
    s = _plugin_table("Heteroscedastic", ns=(50,))
    gap, se = paired_mse_gap(s, 50, first="ate", second="incremental")
    ri, ra = s.row(50, "incremental").rmse, s.row(50, "ate").rmse
    _verdict(capsys, 5, "heteroscedastic ordering reversal at n=50", gap <= 2 * se,
             f"RMSE incr {ri:.3f}, ATE {ra:.3f}; MSE(ATE)-MSE(incr) = {gap:.2e} (2 SE = {2 * se:.2e})")


@pytest.mark.slow
def test_acceptance_06_despar_calibration(capsys):
    cfg = ExperimentConfig(scenario="SparseHighDim", n=(2000,), reps=1000, seed=0,
                           estimand="incremental", method="despar", patience=10)
    rec = run_table(cfg).records[(2000, "incremental")]
    # population target: E[dm/dt] = 0 since covariates and treatment are centered
    cover = float(np.mean((rec.lower <= 0.0) & (0.0 <= rec.upper)))
    z = rec.point / rec.std_error
    ks = stats.kstest(z, "norm")
    ok = 0.92 <= cover <= 0.97 and ks.pvalue > 0.01
    _verdict(capsys, 6, "desparsified interval calibration, n=2000, 1000 reps", ok,
             f"coverage {cover:.3f}; KS statistic {ks.statistic:.4f}, p = {ks.pvalue:.3f}")


def _robust_draw(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    t = x + rng.normal(size=n)
    y = t + np.sin(t) + x + rng.normal(size=n)
    return Dataset(y, t, x[:, None])


@pytest.mark.slow
def test_acceptance_07_double_robustness(capsys):
    # T | X ~ N(x, 1) gives a score linear in (t, x), inside the basis; sin(t) is not.
    # T ~ N(0, 2), so E[1 + cos T] = 1 + exp(-1).
    target = 1.0 + math.exp(-1.0)
    basis = parse_basis("1 + t + x1 + x1^2")
    reps, n = 500, 4000
    est = np.empty(reps)
    for r in range(reps):
        ds = _robust_draw(1000 + r, n)
        est[r] = despar_with_cv(orthogonalize(expand(ds, basis)), ds.y, seed=r).beta1_despar
    bias, se = est.mean() - target, est.std(ddof=1) / math.sqrt(reps)
    _verdict(capsys, 7, "double robustness, misspecified outcome, n=4000", abs(bias) <= 2 * se,
             f"MC bias {bias:.2e}, 2 SE {2 * se:.2e} over {reps} reps")


@pytest.mark.slow
def test_acceptance_08_confounding_bound(capsys):
    cases = [
        ("GaussianCubic", {}), ("HeavyTailCubic", {}), ("LocalConfounded", {"r": 0.0}),
        ("LocalConfounded", {"r": 0.2}), ("Heteroscedastic", {}),
        ("LocalIgnorabilityExample", {}), ("SparseHighDim", {}),
    ]
    parts, ok = [], True
    for scenario, params in cases:
        rep = sensitivity_bound(oracle_for(make_spec(scenario, 10, **params)), 200_000, seed=1)
        ok &= rep.holds()
        parts.append(f"{scenario}{params or ''}: gap {rep.abs_gap:.4f} <= bound {rep.bound:.4f} "
                     f"+ 3x{rep.mc_se:.1e} {rep.holds()}")
        if params.get("r") == 0.0:
            exact = rep.abs_gap == 0.0 and rep.bound == 0.0
            ok &= exact
            parts.append(f"exact zero at r=0: {exact}")
    _verdict(capsys, 8, "confounding bound on every scenario", ok, "; ".join(parts))


@pytest.mark.slow
def test_acceptance_09_identification_check(capsys):
    ex = prop1_check(oracle_for(make_spec("LocalIgnorabilityExample", 10)), [0.5, 1.5], mc_n=400_000)
    gc = prop1_check(oracle_for(make_spec("GaussianCubic", 10)), [-1.0, 0.0, 0.5, 1.5], x_point=0.3,
                     mc_n=400_000)
    exact = ex.lhs[0] == 2.0
    ok = ex.within and gc.within and exact
    detail = (f"example gaps {np.abs(ex.lhs - ex.rhs)} vs 3 SE {3 * ex.se}; lhs at 0.5 = {float(ex.lhs[0])!r}; "
              f"Gaussian cubic max gap {gc.max_abs_gap:.1e}")
    _verdict(capsys, 9, "observational derivative equals conditional causal derivative", ok, detail)


PROPERTY_TESTS = (
    "tests/test_basis.py::test_derivative_matches_central_difference",
    "tests/test_regress.py::test_lasso_soft_threshold_one_column",
    "tests/test_regress.py::test_lasso_matches_sklearn",
    "tests/test_regress.py::test_high_dimensional_kkt",
    "tests/test_regress.py::test_kkt_and_objective_monotone",
    "tests/test_regress.py::test_ols_matches_lstsq_and_is_orthogonal",
    "tests/test_regress.py::test_ols_reparameterization_invariance",
    "tests/test_orthodespar.py::test_reconstruction_identity",
    "tests/test_orthodespar.py::test_transformed_ols_slope_is_plugin",
    "tests/test_orthodespar.py::test_variance_formula_and_centered_form_agree",
)


def test_acceptance_10_property_suites(capsys):
    parts, ok = [], True
    for threads in ("1", "4"):
        env = dict(os.environ, INCREFF_THREADS=threads, OMP_NUM_THREADS=threads,
                   OPENBLAS_NUM_THREADS=threads, MKL_NUM_THREADS=threads)
        res = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                              "--hypothesis-seed=0", *PROPERTY_TESTS],
                             cwd=ROOT, env=env, capture_output=True, text=True)
        last = res.stdout.strip().splitlines()[-1] if res.stdout.strip() else res.stderr[-200:]
        ok &= res.returncode == 0
        parts.append(f"{threads} thread(s): {last}")
    _verdict(capsys, 10, "property suites under different thread counts", ok, "; ".join(parts))
