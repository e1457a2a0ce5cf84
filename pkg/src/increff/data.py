"""Observed samples and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyFile, InvariantViolation, MissingColumn, NonNumericCell, UnreadableFile


@dataclass(frozen=True)
class ColumnSchema:
    outcome_name: str = "y"
    treatment_name: str = "t"
    covariate_names: tuple[str, ...] = ()
    oracle_name: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        for name in (self.outcome_name, self.treatment_name):
            if name in self.covariate_names:
                raise InvariantViolation("schema", f"{name!r} also listed as covariate")

    @property
    def names(self) -> list[str]:
        out = [self.outcome_name, self.treatment_name, *self.covariate_names]
        if self.oracle_name is not None:
            out.append(self.oracle_name)
        return out


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcome ``y``, treatment ``t`` and covariates ``x`` (n x d).

    ``h`` holds the hidden confounder when a simulator exposes it. Estimators
    never look at it.
    """

    y: np.ndarray
    t: np.ndarray
    x: np.ndarray
    h: Optional[np.ndarray] = None
    schema: ColumnSchema = field(default_factory=ColumnSchema)

    def __post_init__(self):
        object.__setattr__(self, "y", _frozen(self.y))
        object.__setattr__(self, "t", _frozen(self.t))
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else np.empty((self.t.shape[0], 0))
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        if self.h is not None:
            object.__setattr__(self, "h", _frozen(self.h))
        if not self.schema.covariate_names and x.shape[1] > 0:
            schema = ColumnSchema(
                self.schema.outcome_name,
                self.schema.treatment_name,
                tuple(f"x{j + 1}" for j in range(x.shape[1])),
                self.schema.oracle_name if self.h is None else (self.schema.oracle_name or "h"),
            )
            object.__setattr__(self, "schema", schema)
        elif self.h is not None and self.schema.oracle_name is None:
            object.__setattr__(
                self,
                "schema",
                ColumnSchema(self.schema.outcome_name, self.schema.treatment_name,
                             self.schema.covariate_names, "h"),
            )

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def d(self) -> int:
        return int(self.x.shape[1])

    def without_oracle(self) -> "Dataset":
        s = self.schema
        return Dataset(self.y, self.t, self.x, None,
                       ColumnSchema(s.outcome_name, s.treatment_name, s.covariate_names))

    def columns(self) -> dict[str, np.ndarray]:
        s = self.schema
        cols = {s.outcome_name: self.y, s.treatment_name: self.t}
        for j, name in enumerate(s.covariate_names):
            cols[name] = self.x[:, j]
        if self.h is not None:
            cols[s.oracle_name or "h"] = self.h
        return cols


def validate(ds: Dataset) -> None:
    """Raise :class:`InvariantViolation` naming the first broken invariant."""
    n = ds.y.shape[0]
    if ds.y.ndim != 1 or ds.t.ndim != 1:
        raise InvariantViolation("shape", "y and t must be vectors")
    if n < 1:
        raise InvariantViolation("length", "need at least one row")
    lengths = {"y": n, "t": ds.t.shape[0], "x": ds.x.shape[0]}
    if ds.h is not None:
        lengths["h"] = ds.h.shape[0]
    if len(set(lengths.values())) != 1:
        raise InvariantViolation("length mismatch", str(lengths))
    for name, col in ds.columns().items():
        if not np.all(np.isfinite(col)):
            raise InvariantViolation("non-finite", f"column {name!r}")
    names = ds.schema.names
    if len(set(names)) != len(names):
        raise InvariantViolation("unique names", str(names))
    if len(ds.schema.covariate_names) != ds.d:
        raise InvariantViolation("schema", "covariate names do not match x columns")


def _parse(value: str, row: int, col: str) -> float:
    try:
        v = float(value)
    except ValueError:
        raise NonNumericCell(row, col, value) from None
    if math.isnan(v):
        raise NonNumericCell(row, col, value)
    return v


def _open(path: Path):
    try:
        return path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc.strerror or exc}") from None


def load_csv(path, schema: ColumnSchema) -> Dataset:
    """Read a comma-separated file with a header row.

    Rows are 1-based in error messages, counting data rows only.
    """
    path = Path(path)
    with _open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(str(path))
        header = [h.strip() for h in header]
        index = {}
        for name in schema.names:
            if name not in header:
                raise MissingColumn(name)
            index[name] = header.index(name)
        rows = [r for r in reader if r]
    if not rows:
        raise EmptyFile(str(path))
    cols = {name: np.empty(len(rows)) for name in schema.names}
    for i, r in enumerate(rows, start=1):
        for name, j in index.items():
            cols[name][i - 1] = _parse(r[j].strip() if j < len(r) else "", i, name)
    x = (np.column_stack([cols[c] for c in schema.covariate_names])
         if schema.covariate_names else np.empty((len(rows), 0)))
    h = cols[schema.oracle_name] if schema.oracle_name else None
    ds = Dataset(cols[schema.outcome_name], cols[schema.treatment_name], x, h, schema)
    validate(ds)
    return ds


def write_csv(ds: Dataset, path) -> None:
    """Write ``ds`` so that :func:`load_csv` reads back identical floats."""
    cols = ds.columns()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(cols))
        for row in zip(*cols.values()):
            w.writerow([repr(float(v)) for v in row])


def schema_from_header(path, outcome: str = "y", treatment: str = "t",
                       oracle: Optional[str] = None,
                       exclude: Sequence[str] = ("h",)) -> ColumnSchema:
    """Treat every header column except outcome, treatment and ``exclude`` as a covariate."""
    with _open(Path(path)) as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise EmptyFile(str(path))
    header = [h.strip() for h in header]
    skip = {outcome, treatment, *exclude}
    if oracle:
        skip.add(oracle)
    return ColumnSchema(outcome, treatment, tuple(h for h in header if h not in skip), oracle)
