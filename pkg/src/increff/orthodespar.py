"""Orthogonalized design and desparsified-lasso inference for the incremental effect.

The transform keeps the treatment column and replaces every other basis
column by ``b_k - t * alpha_k`` with ``alpha_k`` the sample mean of
``d/dt b_k``. In the new coordinates the average derivative of the fitted
surface is the coefficient on ``t`` (up to the lasso bias), which the
desparsified lasso then corrects and equips with a normal interval.

The same construction applies to any linear contrast of the basis whose
treatment component is nonzero. :func:`orthogonalize_contrast` uses the
average treatment effect contrast divided by ``t - t'``, giving the
per-unit ATE analogue of the incremental pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .basis import ExpandedDesign, TreatPower, mean_derivatives
from .errors import DegenerateContrast, DegenerateProjection, NumericalError, TreatmentColumnMissing
from .plugin import EstimateReport
from .regress import CvResult, FoldedCrossProducts, LassoFit

IDENTITY_RTOL = 1e-10
PROJECTION_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class TransformedDesign:
    """``xt[:, k] = design[:, k] - t * alpha[k]`` for every non-treatment column.

    ``rows`` holds the per-observation functional of each basis column
    (``d/dt b_k(t_i, x_i)`` for the incremental effect); its column means
    are ``alpha``.
    """

    xt: np.ndarray
    alpha: np.ndarray
    source: ExpandedDesign
    rows: np.ndarray
    kind: str = "incremental"
    t: Optional[float] = None
    t_prime: Optional[float] = None

    @property
    def treatment_col(self) -> int:
        return self.source.spec.treatment_col

    @property
    def intercept_col(self) -> Optional[int]:
        return self.source.spec.intercept_col

    @property
    def n(self) -> int:
        return self.xt.shape[0]

    @property
    def p(self) -> int:
        return self.xt.shape[1]

    def penalty_weights(self) -> np.ndarray:
        """1 for every column except an unpenalized intercept."""
        w = np.ones(self.p)
        if self.intercept_col is not None:
            w[self.intercept_col] = 0.0
        return w


def _build(ed: ExpandedDesign, alpha: np.ndarray, rows: np.ndarray, kind, t=None, t_prime=None):
    if ed.spec.terms[0] != TreatPower(1):
        raise TreatmentColumnMissing("the first basis term must be the raw treatment t")
    j = ed.spec.treatment_col
    if not np.array_equal(ed.design[:, j], ed.t):
        raise TreatmentColumnMissing("treatment column of the design differs from t")
    xt = ed.design - np.outer(ed.t, alpha)
    xt[:, j] = ed.t
    if ed.spec.intercept_col is not None:
        xt[:, ed.spec.intercept_col] = ed.design[:, ed.spec.intercept_col]
    xt.setflags(write=False)
    return TransformedDesign(xt, alpha, ed, rows, kind, t, t_prime)


def orthogonalize(ed: ExpandedDesign) -> TransformedDesign:
    """Incremental-effect transform with ``alpha = mean_derivatives(ed)``."""
    return _build(ed, mean_derivatives(ed), ed.deriv, "incremental")


def orthogonalize_contrast(ed: ExpandedDesign, t: float, t_prime: float) -> TransformedDesign:
    """Transform for the per-unit contrast ``(b_k(t, x) - b_k(t', x)) / (t - t')``."""
    if t == t_prime:
        raise DegenerateContrast("t and t_prime must differ")
    rows = (ed.at_treatment(t) - ed.at_treatment(t_prime)) / (t - t_prime)
    alpha = rows.mean(axis=0)
    alpha[ed.spec.treatment_col] = 1.0
    if ed.spec.intercept_col is not None:
        alpha[ed.spec.intercept_col] = 0.0
    return _build(ed, alpha, rows, "ate", float(t), float(t_prime))


@dataclass(frozen=True, eq=False)
class DesparResult:
    beta1_despar: float
    u_hat2: float
    gamma_hat: LassoFit
    beta_hat: LassoFit
    z_tilde: np.ndarray
    zx1_inner: float
    ci: EstimateReport
    u_hat2_alt: float = field(repr=False, default=float("nan"))
    cv_gamma: Optional[CvResult] = field(default=None, repr=False)
    cv_beta: Optional[CvResult] = field(default=None, repr=False)

    @property
    def std_error(self) -> float:
        return float(np.sqrt(self.u_hat2 / self.z_tilde.shape[0]))


def _check_level(level):
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")


class _Problems:
    """Cross-products of ``[xt, y]`` shared by the treatment and outcome lasso."""

    def __init__(self, td: TransformedDesign, y, k_folds=None, seed=0):
        y = np.asarray(y, dtype=float)
        if y.shape != (td.n,):
            raise ValueError("y must have one entry per row of the design")
        self.y = y
        self.fcp = FoldedCrossProducts(np.column_stack([td.xt, y]), k_folds, seed)
        self.w = td.penalty_weights()
        j = td.treatment_col
        self.controls = np.array([k for k in range(td.p) if k != j], dtype=np.int64)
        self.all_cols = np.arange(td.p)
        self.j = j
        self.p = td.p

    def gamma(self, lam_x, path=None) -> LassoFit:
        if self.controls.size == 0:
            x1 = self.fcp.A[:, self.j]
            return LassoFit(np.zeros(0), float(lam_x), x1.copy(), 0, True, np.ones(0), np.ones(0))
        return self.fcp.fit(self.j, self.controls, self.w[self.controls], lam_x, path)

    def beta(self, lam, path=None) -> LassoFit:
        return self.fcp.fit(self.p, self.all_cols, self.w, lam, path)


def _finish(td: TransformedDesign, y, gfit: LassoFit, bfit: LassoFit, level: float,
            method: str, cv_gamma=None, cv_beta=None) -> DesparResult:
    n = td.n
    x1 = td.xt[:, td.treatment_col]
    z = gfit.residuals
    zx1 = float(z @ x1) / n
    scale = float(np.linalg.norm(x1) * np.linalg.norm(z)) / n
    if not abs(zx1) >= PROJECTION_RTOL * scale or scale == 0.0:
        raise DegenerateProjection(
            f"treatment column is (almost) explained by the controls: Z'X1/n = {zx1:.3e}")
    b = bfit.beta
    controls = [k for k in range(td.p) if k != td.treatment_col]
    zx = td.xt.T @ z / n
    point = float(z @ y) / n / zx1 - float(zx[controls] @ b[controls]) / zx1
    eps = bfit.residuals
    fitted_deriv = td.rows @ b
    xi = eps * z / zx1 + fitted_deriv
    u2 = float(np.var(xi))
    # centered form with the sample means of the functional rows
    xi_alt = eps * z / zx1 - (float(td.alpha @ b) - fitted_deriv)
    u2_alt = float(np.var(xi_alt))
    if abs(u2 - u2_alt) > IDENTITY_RTOL * max(abs(u2), np.finfo(float).tiny):
        raise NumericalError(f"variance identity violated: {u2!r} vs {u2_alt!r}")
    se = float(np.sqrt(u2 / n))
    q = float(stats.norm.ppf(0.5 + level / 2.0))
    meta = {"lambda": bfit.lam, "lambda_x": gfit.lam, "zx1_inner": zx1,
            "converged": bool(gfit.converged and bfit.converged)}
    if td.kind == "ate":
        width = td.t - td.t_prime
        pt, s = point * width, se * abs(width)
        ci = EstimateReport("Ate", pt, s, pt - q * s, pt + q * s, level, method, n, td.p,
                            td.t, td.t_prime, {**meta, "per_unit_point": point})
    else:
        ci = EstimateReport("IncrementalSp", point, se, point - q * se, point + q * se, level,
                            method, n, td.p, None, None, meta)
    return DesparResult(point, u2, gfit, bfit, z, zx1, ci, u2_alt, cv_gamma, cv_beta)


def despar_estimate(td: TransformedDesign, y, lam: float, lam_x: float,
                    level: float = 0.95) -> DesparResult:
    """Desparsified lasso for the treatment coefficient at fixed penalties.

    ``lam_x`` tunes the lasso of ``t`` on the other transformed columns and
    ``lam`` the lasso of ``y`` on all of them; the intercept is unpenalized
    in both and ``t`` is penalized in the outcome lasso.
    """
    _check_level(level)
    if td.n < 3:
        raise ValueError("need at least 3 observations")
    if lam < 0 or lam_x < 0:
        raise ValueError("penalties must be >= 0")
    probs = _Problems(td, y)
    return _finish(td, probs.y, probs.gamma(lam_x), probs.beta(lam), level, "despar")


def despar_with_cv(td: TransformedDesign, y, k_folds: int = 10, seed: int = 0,
                   level: float = 0.95, grid_size: int = 100,
                   patience: Optional[int] = None) -> DesparResult:
    """Cross-validate both penalties on shared folds, then run :func:`despar_estimate`'s steps."""
    _check_level(level)
    probs = _Problems(td, y, k_folds, seed)
    fcp = probs.fcp
    if probs.controls.size:
        cv_g = fcp.cv(probs.j, probs.controls, probs.w[probs.controls], grid_size, patience=patience)
        gfit = probs.gamma(cv_g.lambda_min, cv_g.lambda_grid)
    else:
        cv_g, gfit = None, probs.gamma(0.0)
    cv_b = fcp.cv(probs.p, probs.all_cols, probs.w, grid_size, patience=patience)
    bfit = probs.beta(cv_b.lambda_min, cv_b.lambda_grid)
    res = _finish(td, probs.y, gfit, bfit, level, "despar-cv", cv_g, cv_b)
    res.ci.metadata.update({"k_folds": k_folds, "seed": seed})
    return res
