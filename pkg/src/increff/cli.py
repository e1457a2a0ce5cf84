"""Command line: ``increff {estimate,simulate,sweep,prop1check,generate} [flags]``.

Every flag can also come from ``--config FILE`` (YAML or JSON, or a table
previously written by ``simulate``); flags given on the command line win.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure, 1 anything else raised by the package.

The lasso penalty is ``(1/n) ||y - X b||^2 + 2 lambda ||b||_1``; a
``lambda`` from software that minimizes ``(1/2n) ||y - X b||^2 + lambda ||b||_1``
corresponds to the same value here.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .basis import expand
from .config import ExperimentConfig, build_config, load_config_file
from .data import load_csv, schema_from_header
from .dgp import generate, make_spec, oracle_for, prop1_check, write_dataset
from .errors import ConfigError, IncreffError
from .montecarlo import resolve_basis, run_table, version_string
from .orthodespar import despar_with_cv, orthogonalize, orthogonalize_contrast
from .plugin import EstimateReport, ate_plugin, incremental_plugin
from .sensitivity import confounding_sweep, write_sweep_csv

ESTIMATE_COLUMNS = ("estimand", "t", "t_prime", "point", "std_error", "ci_lower", "ci_upper",
                    "level", "method", "n", "p")
PROP1_COLUMNS = ("t", "lhs", "rhs", "abs_gap", "mc_se", "within")
DEFAULT_R_GRID = tuple(round(0.1 * k, 1) for k in range(10))


def _params(pairs: Optional[Sequence[str]]) -> Optional[dict]:
    if not pairs:
        return None
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="increff", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"increff {version_string()}")
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("shared")
    g.add_argument("--config", help="YAML/JSON config file or a previously written table")
    g.add_argument("--scenario", help="simulation scenario")
    g.add_argument("--n", help="sample size(s), comma separated")
    g.add_argument("--reps", type=int, help="Monte Carlo replications")
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--basis", help="basis formula such as '1 + t + t^2 + x1' or cubic|linear|sparse")
    g.add_argument("--method", help="ols-plugin or despar")
    g.add_argument("--estimand", help="incremental, ate, or both (simulate only)")
    g.add_argument("--t", type=float, help="first treatment level of the ATE")
    g.add_argument("--tprime", dest="t_prime", type=float, help="second treatment level of the ATE")
    g.add_argument("--level", type=float, help="confidence level (default 0.95)")
    g.add_argument("--kfolds", dest="k_folds", type=int, help="cross-validation folds (default 10)")
    g.add_argument("--patience", type=int,
                   help="stop the cross-validation path after this many worsening penalties")
    g.add_argument("--param", action="append", metavar="KEY=VALUE", help="scenario parameter")
    g.add_argument("--out", dest="out_path", help="output file")
    g.add_argument("--format", help="csv or markdown")
    est = sub.add_parser("estimate", parents=[common], help="estimate on a CSV file")
    est.add_argument("--data", help="input CSV with outcome, treatment and covariate columns")
    est.add_argument("--outcome", help="outcome column (default y)")
    est.add_argument("--treatment", help="treatment column (default t)")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo table")
    sw = sub.add_parser("sweep", parents=[common], help="RMSE under growing local confounding")
    sw.add_argument("--r-grid", dest="r_grid", help="confounded shares, comma separated")
    sw.add_argument("--mode", help="random or worstcase")
    sw.add_argument("--mc-n", dest="mc_n", type=int, help="Monte Carlo draws for the bound")
    pc = sub.add_parser("prop1check", parents=[common], help="identification check on a t grid")
    pc.add_argument("--t-grid", dest="t_grid", help="treatment values, comma separated")
    pc.add_argument("--x", dest="x_point", type=float, help="covariate value (default 0)")
    pc.add_argument("--mc-n", dest="mc_n", type=int, help="posterior draws per grid point")
    sub.add_parser("generate", parents=[common], help="draw one dataset to CSV")
    return ap


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    file_values = load_config_file(ns.config) if ns.config else {}
    over = {k: v for k, v in vars(ns).items() if k not in ("config", "param")}
    over["params"] = _params(ns.param)
    return build_config(file_values, over)


# --------------------------------------------------------------------------
# verbs


def _emit(text: str, cfg: ExperimentConfig, out=None) -> None:
    out = sys.stdout if out is None else out
    out.write(text)
    if cfg.out_path:
        Path(cfg.out_path).write_text(text, encoding="utf-8")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_report(report: EstimateReport, fmt: str = "csv") -> str:
    row = report.as_row()
    if fmt == "markdown":
        return ("| " + " | ".join(ESTIMATE_COLUMNS) + " |\n" + "|---" * len(ESTIMATE_COLUMNS) + "|\n"
                + "| " + " | ".join(_fmt(row[c]) for c in ESTIMATE_COLUMNS) + " |\n")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ESTIMATE_COLUMNS)
    w.writerow([_fmt(row[c]) for c in ESTIMATE_COLUMNS])
    return buf.getvalue()


def run_estimate(cfg: ExperimentConfig, data_path=None) -> EstimateReport:
    """Fit the configured estimator to a CSV and return its report."""
    data_path = data_path or cfg.data
    if not data_path:
        raise ConfigError("estimate needs --data")
    estimand = cfg.estimand or "incremental"
    schema = schema_from_header(data_path, cfg.outcome, cfg.treatment)
    ds = load_csv(data_path, schema)
    basis = resolve_basis(cfg.basis, ds.d)
    ed = expand(ds, basis)
    method = cfg.method or "ols-plugin"
    if method == "ols-plugin":
        if estimand == "incremental":
            return incremental_plugin(ed, ds.y, cfg.level)
        return ate_plugin(ed, ds.y, cfg.t, cfg.t_prime, cfg.level)
    td = orthogonalize(ed) if estimand == "incremental" else orthogonalize_contrast(ed, cfg.t, cfg.t_prime)
    return despar_with_cv(td, ds.y, cfg.k_folds, cfg.seed, cfg.level, cfg.grid_size, cfg.patience).ci


def _cmd_estimate(cfg):
    _emit(format_report(run_estimate(cfg), cfg.format), cfg)


def _cmd_simulate(cfg):
    summary = run_table(cfg)
    _emit(summary.to_markdown() if cfg.format == "markdown" else summary.to_csv(), cfg)


def _cmd_sweep(cfg):
    params = {k: v for k, v in cfg.params.items() if k not in ("a", "b", "r", "u")}
    base = make_spec(cfg.scenario or "LocalConfounded", cfg.n[0] if cfg.n else 100, cfg.seed, **params)
    t, tp = (cfg.t, cfg.t_prime) if cfg.t is not None else (0.5, -0.5)
    rows = confounding_sweep(base, cfg.r_grid or DEFAULT_R_GRID, cfg.mode, cfg.reps, cfg.seed, t, tp,
                             bound_mc_n=cfg.mc_n)
    buf = io.StringIO()
    header = [f"increff {version_string()}", f"seed: {cfg.seed}", f"config: {cfg.to_json()}"]
    write_sweep_csv(rows, buf, header)
    _emit(buf.getvalue(), cfg)


def _cmd_prop1check(cfg):
    scenario = cfg.scenario or "LocalIgnorabilityExample"
    oracle = oracle_for(make_spec(scenario, 1, cfg.seed, **cfg.params))
    grid = cfg.t_grid or (0.5, 1.5)
    res = prop1_check(oracle, grid, cfg.x_point, cfg.mc_n, cfg.seed)
    buf = io.StringIO()
    buf.write(f"# increff {version_string()}\n# config: {cfg.to_json()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROP1_COLUMNS)
    for t0, l, r, s in zip(grid, res.lhs, res.rhs, res.se):
        w.writerow([repr(float(t0)), repr(float(l)), repr(float(r)), repr(float(abs(l - r))),
                    repr(float(s)), bool(abs(l - r) <= 3 * s + 1e-6)])
    _emit(buf.getvalue(), cfg)
    if not res.within:
        print(f"warning: largest gap {res.max_abs_gap:.3g} exceeds 3 MC SE ({res.mc_se:.3g})",
              file=sys.stderr)


def _cmd_generate(cfg):
    if cfg.scenario is None:
        raise ConfigError("generate needs --scenario")
    if not cfg.out_path:
        raise ConfigError("generate needs --out")
    ds, _ = generate(make_spec(cfg.scenario, cfg.n[0] if cfg.n else 100, cfg.seed, **cfg.params))
    write_dataset(ds, make_spec(cfg.scenario, ds.n, cfg.seed, **cfg.params), cfg.out_path)


_COMMANDS = {"estimate": _cmd_estimate, "simulate": _cmd_simulate, "sweep": _cmd_sweep,
             "prop1check": _cmd_prop1check, "generate": _cmd_generate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        _COMMANDS[cfg.command](cfg)
    except IncreffError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"error: NumericalError: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
