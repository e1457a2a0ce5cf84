"""Incremental and average treatment effects for continuous treatments."""

from .basis import BasisSpec, ExpandedDesign, cubic_basis, expand, mean_derivatives, parse_basis
from .data import ColumnSchema, Dataset, load_csv, validate, write_csv
from .dgp import DgpSpec, OracleDgp, generate, make_spec, prop1_check, sparse_highdim_generate
from .errors import ConfigError, DataError, IncreffError, NumericalError
from .orthodespar import (DesparResult, TransformedDesign, despar_estimate, despar_with_cv,
                          orthogonalize, orthogonalize_contrast)
from .plugin import EstimateReport, ate_plugin, incremental_plugin, true_tau_fs, true_theta_fs
from .regress import CvResult, LassoFit, OlsFit, lasso_cv, lasso_fit, ols_fit
from .sensitivity import SensitivityReport, confounding_sweep, sensitivity_bound

__version__ = "0.1.0"

__all__ = [
    "BasisSpec", "ExpandedDesign", "cubic_basis", "expand", "mean_derivatives", "parse_basis",
    "ColumnSchema", "Dataset", "load_csv", "validate", "write_csv",
    "DgpSpec", "OracleDgp", "generate", "make_spec", "prop1_check", "sparse_highdim_generate",
    "ConfigError", "DataError", "IncreffError", "NumericalError",
    "DesparResult", "TransformedDesign", "despar_estimate", "despar_with_cv", "orthogonalize",
    "orthogonalize_contrast",
    "EstimateReport", "ate_plugin", "incremental_plugin", "true_tau_fs", "true_theta_fs",
    "CvResult", "LassoFit", "OlsFit", "lasso_cv", "lasso_fit", "ols_fit",
    "SensitivityReport", "confounding_sweep", "sensitivity_bound",
]
