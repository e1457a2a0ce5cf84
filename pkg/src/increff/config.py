"""Experiment configuration shared by the command line and the Monte Carlo harness."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .dgp import SCENARIOS
from .errors import ConfigError

COMMANDS = ("estimate", "simulate", "sweep", "prop1check", "generate")
METHODS = ("ols-plugin", "despar")
ESTIMANDS = ("incremental", "ate", "both")
FORMATS = ("csv", "markdown")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to rerun a command.

    ``n`` is a tuple of sample sizes for ``simulate``. ``basis`` may be a
    basis formula or one of the shorthands ``cubic``, ``linear`` and
    ``sparse``; ``None`` picks the scenario default.
    """

    command: str = "simulate"
    scenario: Optional[str] = None
    n: tuple = ()
    basis: Optional[str] = None
    method: Optional[str] = None
    estimand: Optional[str] = None
    t: Optional[float] = None
    t_prime: Optional[float] = None
    reps: int = 1000
    seed: int = 0
    level: float = 0.95
    k_folds: int = 10
    grid_size: int = 100
    patience: Optional[int] = None
    out_path: Optional[str] = None
    format: str = "csv"
    data: Optional[str] = None
    outcome: str = "y"
    treatment: str = "t"
    params: dict = field(default_factory=dict)
    r_grid: tuple = ()
    mode: str = "random"
    mc_n: int = 100_000
    t_grid: tuple = ()
    x_point: Optional[float] = None

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("n", tuple(int(v) for v in _as_list(self.n)))
        set_("r_grid", tuple(float(v) for v in _as_list(self.r_grid)))
        set_("t_grid", tuple(float(v) for v in _as_list(self.t_grid)))
        set_("params", dict(self.params or {}))
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.scenario is not None and self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.method is not None and self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.estimand is not None and self.estimand not in ESTIMANDS:
            raise ConfigError(f"estimand must be one of {ESTIMANDS}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        if self.mode not in ("random", "worstcase"):
            raise ConfigError("mode must be 'random' or 'worstcase'")
        if int(self.reps) < 1:
            raise ConfigError("reps must be >= 1")
        if not 0.0 < float(self.level) < 1.0:
            raise ConfigError("level must lie in (0, 1)")
        if int(self.k_folds) < 2:
            raise ConfigError("k_folds must be >= 2")
        if self.patience is not None and int(self.patience) < 1:
            raise ConfigError("patience must be >= 1")
        if (self.t is None) != (self.t_prime is None):
            raise ConfigError("t and t_prime must be given together")
        if self.t is not None and float(self.t) == float(self.t_prime):
            raise ConfigError("t and t_prime must differ")
        if self.estimand == "ate" and self.t is None and not (
                self.command == "simulate" and self.scenario == "SparseHighDim"):
            raise ConfigError("estimand 'ate' requires t and t_prime")
        if self.command == "estimate" and self.estimand == "both":
            raise ConfigError("estimate takes a single estimand")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n"] = list(self.n)
        d["r_grid"] = list(self.r_grid)
        d["t_grid"] = list(self.t_grid)
        return d

    def to_json(self) -> str:
        """Experiment content only; output destination and format are left out."""
        d = {k: v for k, v in self.to_dict().items() if k not in _OUTPUT_KEYS}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))


def _as_list(v) -> list:
    if v is None:
        return []
    if isinstance(v, str):
        return [s for s in v.replace(" ", "").split(",") if s]
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v]


_OUTPUT_KEYS = ("out_path", "format")

_ALIASES = {"tprime": "t_prime", "kfolds": "k_folds", "out": "out_path", "mc-n": "mc_n",
            "t-grid": "t_grid", "r-grid": "r_grid", "x": "x_point"}


def _normalize(raw: dict) -> dict:
    """Accept nested sections and a few spelling variants of keys."""
    out = {}
    for key, value in raw.items():
        key = _ALIASES.get(key, key.replace("-", "_"))
        if key in ("dgp", "experiment", "estimator", "output") and isinstance(value, dict):
            out.update(_normalize(value))
        else:
            out[key] = value
    return out


def load_config_file(path) -> dict:
    """YAML or JSON mapping; a table written by this package is read from its ``# config:`` line."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    if text.lstrip().startswith("#"):
        for line in text.splitlines():
            if line.startswith("# config:"):
                return _normalize(json.loads(line[len("# config:"):]))
        raise ConfigError(f"{path}: no '# config:' header line")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return _normalize(raw)


def build_config(file_values: dict, overrides: dict[str, Any]) -> ExperimentConfig:
    """Merge ``overrides`` (non-None entries) over ``file_values``."""
    known = {f.name for f in fields(ExperimentConfig)}
    merged = dict(file_values)
    for k, v in overrides.items():
        if v is not None:
            if k == "params":
                merged["params"] = {**merged.get("params", {}), **v}
            else:
                merged[k] = v
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
