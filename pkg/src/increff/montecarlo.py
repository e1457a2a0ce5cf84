"""Replication loop behind the simulation tables.

Each replication draws a fresh dataset with seed ``derive_seed(seed, n, rep)``,
fits the configured estimator, and scores both estimands against the oracle's
sample targets. Replications are independent, so the pool size changes
nothing but the wall clock.

ATE errors are measured per unit of ``t - t'``, i.e. the estimate and the
target are both divided by ``t - t'``. With ``|t - t'| = 1`` this is the
plain ATE error.
"""

from __future__ import annotations

import csv
import io
import math
import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .basis import BasisSpec, cubic_basis, expand, parse_basis
from .config import ExperimentConfig
from .dgp import DgpSpec, generate, make_spec, sparse_basis_text
from .errors import ConfigError
from .orthodespar import despar_with_cv, orthogonalize, orthogonalize_contrast
from .plugin import ate_plugin, incremental_plugin, true_tau_fs, true_theta_fs
from .regress import ols_fit
from .rng import CounterRng, derive_seed

VERSION = "0.1.0"
MIN_TABLE_REPS = 100
DEFAULT_N = {"SparseHighDim": (200, 400, 600, 1000)}
_V_CONTRAST = 50

SUMMARY_COLUMNS = ("n", "estimand", "method", "reps", "coverage", "coverage_se", "ci_length",
                   "ci_length_se", "rmse", "rmse_se", "bias", "bias_se")


@lru_cache(maxsize=1)
def version_string() -> str:
    """Package version with the short commit hash of the source tree when available."""
    try:
        sha = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5, check=True).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        sha = ""
    return f"{VERSION}+g{sha}" if sha else VERSION


# --------------------------------------------------------------------------
# defaults resolved from the scenario


def resolve_basis(text: Optional[str], d: int, scenario: Optional[str] = None,
                  params: Optional[dict] = None) -> BasisSpec:
    """Basis from a formula or a shorthand (``cubic``, ``linear``, ``sparse``)."""
    if text is None:
        text = "sparse" if scenario == "SparseHighDim" else "cubic"
    key = text.strip().lower()
    if key == "cubic":
        return cubic_basis(d)
    if key == "linear":
        return parse_basis(" + ".join(["1", "t"] + [f"x{j + 1}" for j in range(d)]))
    if key == "sparse":
        k = int((params or {}).get("n_interact", 36))
        return parse_basis(sparse_basis_text(d, min(k, d)))
    return parse_basis(text)


def resolve_method(cfg: ExperimentConfig) -> str:
    if cfg.method is not None:
        return cfg.method
    return "despar" if cfg.scenario == "SparseHighDim" else "ols-plugin"


def resolve_contrast(cfg: ExperimentConfig) -> Optional[tuple[float, float]]:
    """Fixed ``(t, t')``; ``None`` means drawn per replication from the observed treatments."""
    if cfg.t is not None:
        return float(cfg.t), float(cfg.t_prime)
    if cfg.scenario == "SparseHighDim":
        return None
    return 0.5, -0.5


def estimands_of(cfg: ExperimentConfig) -> tuple[str, ...]:
    e = cfg.estimand or "both"
    return ("incremental", "ate") if e == "both" else (e,)


def dgp_spec(cfg: ExperimentConfig, n: int, seed: int) -> DgpSpec:
    return make_spec(cfg.scenario, n, seed, **cfg.params)


# --------------------------------------------------------------------------
# one replication


@dataclass(frozen=True)
class RepOutcome:
    """Per-estimand ``(point, std_error, lower, upper, truth)`` on the scoring scale."""

    rep: int
    values: dict


def _draw_contrast(t: np.ndarray, seed: int) -> tuple[float, float]:
    n = t.shape[0]
    u = CounterRng(seed).uniform01(_V_CONTRAST, 0, 1, 2)[0]
    i = int(u[0] * n)
    j = (i + 1 + int(u[1] * (n - 1))) % n
    return float(t[i]), float(t[j])


def run_rep(cfg: ExperimentConfig, n: int, rep: int) -> RepOutcome:
    """Generate, estimate, and score one replication."""
    seed = derive_seed(cfg.seed, n, rep)
    ds, oracle = generate(dgp_spec(cfg, n, seed))
    obs = ds.without_oracle()
    basis = resolve_basis(cfg.basis, ds.d, cfg.scenario, cfg.params)
    ed = expand(obs, basis)
    method = resolve_method(cfg)
    wanted = estimands_of(cfg)
    contrast = resolve_contrast(cfg)
    if contrast is None and "ate" in wanted:
        contrast = _draw_contrast(ds.t, seed)
    values = {}
    fit = ols_fit(ed.design, obs.y) if method == "ols-plugin" else None
    lam_seed = derive_seed(seed, 1)
    for est in wanted:
        if est == "incremental":
            if fit is not None:
                report = incremental_plugin(ed, obs.y, cfg.level, fit=fit)
            else:
                report = despar_with_cv(orthogonalize(ed), obs.y, cfg.k_folds, lam_seed, cfg.level,
                                        cfg.grid_size, cfg.patience).ci
            truth, width = true_theta_fs(oracle, ds), 1.0
        else:
            t, tp = contrast
            if fit is not None:
                report = ate_plugin(ed, obs.y, t, tp, cfg.level, fit=fit)
            else:
                report = despar_with_cv(orthogonalize_contrast(ed, t, tp), obs.y, cfg.k_folds,
                                        lam_seed, cfg.level, cfg.grid_size, cfg.patience).ci
            truth, width = true_tau_fs(oracle, ds, t, tp), t - tp
        lo, hi = sorted((report.ci_lower / width, report.ci_upper / width))
        values[est] = (report.point / width, report.std_error / abs(width), lo, hi, truth / width)
    return RepOutcome(rep, values)


def _run_chunk(args) -> list[RepOutcome]:
    cfg, n, reps = args
    return [run_rep(cfg, n, r) for r in reps]


def worker_count() -> int:
    raw = os.environ.get("INCREFF_THREADS", "").strip()
    if not raw:
        return 1
    try:
        k = int(raw)
    except ValueError:
        raise ConfigError(f"INCREFF_THREADS must be an integer, got {raw!r}") from None
    return max(1, min(k, os.cpu_count() or 1))


# --------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class SummaryRow:
    n: int
    estimand: str
    method: str
    reps: int
    coverage: float
    coverage_se: float
    ci_length: float
    ci_length_se: float
    rmse: float
    rmse_se: float
    bias: float
    bias_se: float

    def values(self) -> tuple:
        return tuple(getattr(self, c) for c in SUMMARY_COLUMNS)


@dataclass(frozen=True, eq=False)
class Records:
    """Raw per-replication arrays for one ``(n, estimand)`` cell."""

    point: np.ndarray
    std_error: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    truth: np.ndarray

    @property
    def error(self) -> np.ndarray:
        return self.point - self.truth


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0


def rmse_with_se(err: np.ndarray) -> tuple[float, float]:
    """RMSE with the delta-method standard error ``se(MSE) / (2 RMSE)``."""
    mse, se_mse = _mean_se(err ** 2)
    rmse = math.sqrt(mse)
    return rmse, (se_mse / (2.0 * rmse) if rmse > 0 else 0.0)


def summarize(rec: Records, n: int, estimand: str, method: str) -> SummaryRow:
    cover = ((rec.lower <= rec.truth) & (rec.truth <= rec.upper)).astype(float)
    cov, cov_se = _mean_se(cover)
    length, length_se = _mean_se(rec.upper - rec.lower)
    rmse, rmse_se = rmse_with_se(rec.error)
    bias, bias_se = _mean_se(rec.error)
    return SummaryRow(n, estimand, method, rec.point.size, cov, cov_se, length, length_se,
                      rmse, rmse_se, bias, bias_se)


@dataclass(frozen=True, eq=False)
class MonteCarloSummary:
    config: ExperimentConfig
    rows: tuple
    records: dict = field(repr=False)

    def row(self, n: int, estimand: str) -> SummaryRow:
        for r in self.rows:
            if r.n == n and r.estimand == estimand:
                return r
        raise KeyError((n, estimand))

    def header_lines(self) -> list[str]:
        return [f"increff {version_string()}", f"seed: {self.config.seed}",
                f"config: {self.config.to_json()}"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for line in self.header_lines():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row.values()])
        return buf.getvalue()

    def to_markdown(self) -> str:
        """One column per sample size, ``value ± se`` cells as in the published tables."""
        ns = sorted({r.n for r in self.rows})
        lines = [f"# {line}" for line in self.header_lines()] + [""]
        lines.append("| | " + " | ".join(f"n={n}" for n in ns) + " |")
        lines.append("|---" * (len(ns) + 1) + "|")
        method = self.rows[0].method if self.rows else ""
        for label, key in (("CI coverage", "coverage"), ("CI length", "ci_length"),
                           ("RMSE", "rmse"), ("bias", "bias")):
            for est in dict.fromkeys(r.estimand for r in self.rows):
                cells = []
                for n in ns:
                    r = self.row(n, est)
                    cells.append(f"{getattr(r, key):.3g} ± {getattr(r, key + '_se'):.2g}")
                lines.append(f"| {label} {est} ({method}) | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"

    def write(self, path, fmt: str = "csv") -> None:
        text = self.to_markdown() if fmt == "markdown" else self.to_csv()
        Path(path).write_text(text, encoding="utf-8")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6g}"


def run_table(cfg: ExperimentConfig, min_reps: int = MIN_TABLE_REPS,
              workers: Optional[int] = None) -> MonteCarloSummary:
    """Replicate ``cfg.reps`` times at each sample size and aggregate per estimand."""
    if cfg.scenario is None:
        raise ConfigError("simulate needs --scenario")
    if cfg.reps < min_reps:
        raise ConfigError(f"table mode needs at least {min_reps} replications, got {cfg.reps}")
    ns = cfg.n or DEFAULT_N.get(cfg.scenario, (10, 20, 50))
    workers = worker_count() if workers is None else max(1, int(workers))
    method = resolve_method(cfg)
    rows, records = [], {}
    for n in ns:
        outcomes = _replicate(cfg, n, workers)
        for est in estimands_of(cfg):
            arr = np.array([o.values[est] for o in outcomes])
            rec = Records(*(arr[:, k].copy() for k in range(5)))
            records[(n, est)] = rec
            rows.append(summarize(rec, n, est, method))
    return MonteCarloSummary(cfg, tuple(rows), records)


def _replicate(cfg: ExperimentConfig, n: int, workers: int) -> list[RepOutcome]:
    reps = list(range(cfg.reps))
    if workers == 1:
        return _run_chunk((cfg, n, reps))
    chunks = [reps[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [(cfg, n, c) for c in chunks]))
    out = [o for part in parts for o in part]
    out.sort(key=lambda o: o.rep)
    return out


def paired_mse_gap(summary: MonteCarloSummary, n: int,
                   first: str = "incremental", second: str = "ate") -> tuple[float, float]:
    """``MSE(first) - MSE(second)`` over common replications and its MC standard error."""
    d = summary.records[(n, first)].error ** 2 - summary.records[(n, second)].error ** 2
    return _mean_se(d)


def records_to_csv(summary: MonteCarloSummary, keys: Sequence = ()) -> str:
    """Raw replication values, for downstream analysis."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("n", "estimand", "rep", "point", "std_error", "lower", "upper", "truth"))
    for (n, est), rec in summary.records.items():
        if keys and (n, est) not in keys:
            continue
        for i in range(rec.point.size):
            w.writerow([n, est, i] + [repr(float(a[i])) for a in
                                      (rec.point, rec.std_error, rec.lower, rec.upper, rec.truth)])
    return buf.getvalue()
