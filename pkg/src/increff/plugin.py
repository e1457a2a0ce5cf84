"""Plug-in estimators of the incremental effect and the average treatment effect.

Both are linear functionals ``c' beta`` of a least-squares fit on a basis
expansion, so each comes with an exact standard error
``sqrt(sigma2 * c' (X'X)^{-1} c)`` and a Student-t interval on ``n - p``
degrees of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .basis import ExpandedDesign, mean_derivatives
from .data import Dataset
from .errors import DegenerateContrast, OracleUnavailable
from .regress import OlsFit, ols_fit

ESTIMANDS = ("IncrementalFs", "IncrementalSp", "Ate")


@dataclass(frozen=True)
class EstimateReport:
    estimand: str
    point: float
    std_error: float
    ci_lower: float
    ci_upper: float
    level: float
    method: str
    n: int
    p: int
    t: Optional[float] = None
    t_prime: Optional[float] = None
    metadata: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.estimand not in ESTIMANDS:
            raise ValueError(f"unknown estimand {self.estimand!r}")

    @property
    def ci_length(self) -> float:
        return self.ci_upper - self.ci_lower

    def covers(self, value: float) -> bool:
        return self.ci_lower <= value <= self.ci_upper

    def as_row(self) -> dict:
        return {
            "estimand": self.estimand, "t": self.t, "t_prime": self.t_prime,
            "point": self.point, "std_error": self.std_error,
            "ci_lower": self.ci_lower, "ci_upper": self.ci_upper,
            "level": self.level, "method": self.method, "n": self.n, "p": self.p,
        }


def _check_level(level: float) -> None:
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")


def contrast_report(fit: OlsFit, c: np.ndarray, level: float, estimand: str, method: str,
                    t=None, t_prime=None) -> EstimateReport:
    """Report for ``c' beta`` with a Student-t interval on the residual degrees of freedom."""
    _check_level(level)
    point = float(c @ fit.beta)
    var = float(fit.sigma2_hat * (c @ fit.xtx_inv @ c))
    se = float(np.sqrt(max(var, 0.0)))
    q = float(stats.t.ppf(0.5 + level / 2.0, fit.df_resid))
    n, p = fit.residuals.shape[0], fit.beta.shape[0]
    return EstimateReport(estimand, point, se, point - q * se, point + q * se, level, method,
                          n, p, t, t_prime, {"df": fit.df_resid})


def incremental_plugin(ed: ExpandedDesign, y, level: float = 0.95,
                       fit: Optional[OlsFit] = None) -> EstimateReport:
    """Average derivative of the fitted surface, ``mean_i sum_k beta_k d/dt b_k(t_i, x_i)``."""
    fit = ols_fit(ed.design, y) if fit is None else fit
    return contrast_report(fit, mean_derivatives(ed), level, "IncrementalFs", "ols-plugin")


def ate_contrast(ed: ExpandedDesign, t: float, t_prime: float) -> np.ndarray:
    """``w_k = mean_i [b_k(t, x_i) - b_k(t', x_i)]``."""
    if t == t_prime:
        raise DegenerateContrast("t and t_prime must differ")
    return (ed.at_treatment(t) - ed.at_treatment(t_prime)).mean(axis=0)


def ate_plugin(ed: ExpandedDesign, y, t: float, t_prime: float, level: float = 0.95,
               fit: Optional[OlsFit] = None) -> EstimateReport:
    """``mean_i fhat(t, x_i) - fhat(t', x_i)`` with its OLS interval."""
    w = ate_contrast(ed, t, t_prime)
    fit = ols_fit(ed.design, y) if fit is None else fit
    return contrast_report(fit, w, level, "Ate", "ols-plugin", float(t), float(t_prime))


def _oracle_h(oracle, ds: Dataset):
    if oracle is None:
        raise OracleUnavailable("no oracle attached to this dataset")
    if oracle.m_hidden is not None and ds.h is None:
        raise OracleUnavailable("the oracle target needs the hidden column h")
    return ds.h


def true_theta_fs(oracle, ds: Dataset) -> float:
    """Sample incremental effect ``mean_i dm/dt(t_i, x_i, h_i)``."""
    h = _oracle_h(oracle, ds)
    return float(np.mean(oracle.dm_dt(ds.t, ds.x, h)))


def true_tau_fs(oracle, ds: Dataset, t: float, t_prime: float) -> float:
    """Sample average treatment effect ``mean_i m(t, x_i, h_i) - m(t', x_i, h_i)``."""
    h = _oracle_h(oracle, ds)
    n = ds.n
    return float(np.mean(oracle.m(np.full(n, float(t)), ds.x, h)
                         - oracle.m(np.full(n, float(t_prime)), ds.x, h)))
