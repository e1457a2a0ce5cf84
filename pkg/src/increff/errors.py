"""Exception hierarchy.

Errors are grouped by the CLI exit code they map to: configuration problems,
data problems and numerical failures.
"""

from __future__ import annotations


class IncreffError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(IncreffError):
    exit_code = 2


class DataError(IncreffError):
    exit_code = 3


class NumericalError(IncreffError):
    exit_code = 4


class EmptyFile(DataError):
    pass


class UnreadableFile(DataError):
    pass


class MissingColumn(DataError):
    def __init__(self, name: str):
        super().__init__(f"missing column {name!r}")
        self.name = name


class NonNumericCell(DataError):
    def __init__(self, row: int, col: str, value: str = ""):
        super().__init__(f"non-numeric cell {value!r} at row {row}, column {col!r}")
        self.row = row
        self.col = col


class InvariantViolation(DataError):
    def __init__(self, invariant: str, detail: str = ""):
        msg = invariant if not detail else f"{invariant}: {detail}"
        super().__init__(msg)
        self.invariant = invariant


class CovariateIndexOutOfRange(DataError):
    pass


class TooFewRows(NumericalError):
    pass


class RankDeficient(NumericalError):
    def __init__(self, effective_rank: int, p: int):
        super().__init__(f"design is rank deficient: effective rank {effective_rank} < {p}")
        self.effective_rank = effective_rank


class DegenerateContrast(NumericalError):
    pass


class DegenerateProjection(NumericalError):
    pass


class TreatmentColumnMissing(NumericalError):
    pass


class OracleUnavailable(IncreffError):
    pass


class InvalidParams(ConfigError):
    pass
