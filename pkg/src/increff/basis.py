"""Basis expansions b_k(t, x) together with their exact treatment derivatives.

A basis is written as text such as ``"1 + t + t^2 + t^3 + x1 + x1^2 + t*x1"``:
terms are separated by ``+``, ``^`` raises to an integer power, ``t*xj`` is a
treatment-covariate interaction and ``1`` requests an intercept. Covariates
are referenced 1-based (``x1`` is the first column); a bare ``x`` means ``x1``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .data import Dataset
from .errors import ConfigError, CovariateIndexOutOfRange, InvariantViolation

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Intercept:
    def label(self) -> str:
        return "1"

    def value(self, t, x):
        return np.ones_like(t)

    def deriv(self, t, x):
        return np.zeros_like(t)


@dataclass(frozen=True)
class TreatPower:
    exponent: int = 1

    def __post_init__(self):
        if self.exponent < 1:
            raise InvariantViolation("basis", "treatment exponent must be >= 1")

    def label(self) -> str:
        return "t" if self.exponent == 1 else f"t^{self.exponent}"

    def value(self, t, x):
        return t ** self.exponent

    def deriv(self, t, x):
        if self.exponent == 1:
            return np.ones_like(t)
        return self.exponent * t ** (self.exponent - 1)


@dataclass(frozen=True)
class CovPower:
    index: int
    exponent: int = 1

    def __post_init__(self):
        if self.exponent < 1 or self.index < 0:
            raise InvariantViolation("basis", "bad covariate power term")

    def label(self) -> str:
        base = f"x{self.index + 1}"
        return base if self.exponent == 1 else f"{base}^{self.exponent}"

    def value(self, t, x):
        return x[:, self.index] ** self.exponent

    def deriv(self, t, x):
        return np.zeros_like(t)


@dataclass(frozen=True)
class TreatCovInteraction:
    index: int

    def label(self) -> str:
        return f"t*x{self.index + 1}"

    def value(self, t, x):
        return t * x[:, self.index]

    def deriv(self, t, x):
        return x[:, self.index].copy()


@dataclass(frozen=True)
class Custom:
    """User-supplied term; both the function and its exact t-derivative are required."""

    name: str
    evaluator: ArrayFn = field(compare=False)
    derivative: ArrayFn = field(compare=False)

    def label(self) -> str:
        return self.name

    def value(self, t, x):
        return np.asarray(self.evaluator(t, x), dtype=float)

    def deriv(self, t, x):
        return np.asarray(self.derivative(t, x), dtype=float)


BasisTerm = Intercept | TreatPower | CovPower | TreatCovInteraction | Custom


def _cov_index(term) -> Optional[int]:
    return getattr(term, "index", None)


@dataclass(frozen=True)
class BasisSpec:
    """Ordered basis terms; the first term must be the raw treatment ``t``."""

    terms: tuple
    include_intercept: bool = True

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise InvariantViolation("basis", "term list is empty")
        if terms[0] != TreatPower(1):
            raise InvariantViolation("basis", "first term must be the raw treatment t")
        if any(isinstance(term, Intercept) for term in terms):
            raise InvariantViolation("basis", "use include_intercept instead of an Intercept term")
        labels = [term.label() for term in terms]
        if len(set(labels)) != len(labels):
            raise InvariantViolation("basis", f"duplicate terms in {labels}")

    @property
    def columns(self) -> tuple:
        return ((Intercept(),) if self.include_intercept else ()) + self.terms

    @property
    def treatment_col(self) -> int:
        return 1 if self.include_intercept else 0

    @property
    def intercept_col(self) -> Optional[int]:
        return 0 if self.include_intercept else None

    @property
    def p(self) -> int:
        return len(self.columns)

    def labels(self) -> list[str]:
        return [c.label() for c in self.columns]

    def to_text(self) -> str:
        return " + ".join(self.labels())

    def max_covariate(self) -> int:
        idx = [_cov_index(c) for c in self.terms if _cov_index(c) is not None]
        return max(idx) + 1 if idx else 0

    def evaluate(self, t, x) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(design, deriv)`` for treatment vector ``t`` and covariates ``x``."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float).reshape(t.shape[0], -1)
        if self.max_covariate() > x.shape[1]:
            raise CovariateIndexOutOfRange(
                f"basis uses x{self.max_covariate()} but data has {x.shape[1]} covariates")
        cols = self.columns
        design = np.empty((t.shape[0], len(cols)))
        deriv = np.empty((t.shape[0], len(cols)))
        for k, term in enumerate(cols):
            design[:, k] = term.value(t, x)
            deriv[:, k] = term.deriv(t, x)
        return design, deriv


_TERM_RE = re.compile(
    r"""^(?:
        (?P<one>1) |
        (?P<zero>0) |
        t(?:\^(?P<texp>\d+))? |
        (?:t\*x(?P<ia>\d*)|x(?P<ib>\d*)\*t) |
        x(?P<cidx>\d*)(?:\^(?P<cexp>\d+))?
    )$""",
    re.VERBOSE,
)


def parse_basis(text: str) -> BasisSpec:
    """Parse the textual basis grammar.

    The intercept is present iff the term ``1`` appears. Terms are reordered
    so that ``t`` comes first; the remaining order is preserved.
    """
    intercept = False
    terms = []
    for raw in text.split("+"):
        tok = raw.replace(" ", "")
        if not tok:
            raise ConfigError(f"empty term in basis {text!r}")
        m = _TERM_RE.match(tok)
        if m is None:
            raise ConfigError(f"cannot parse basis term {tok!r}")
        if m.group("one"):
            intercept = True
        elif m.group("zero"):
            continue
        elif tok.startswith("t") and "*" not in tok:
            terms.append(TreatPower(int(m.group("texp") or 1)))
        elif "*" in tok:
            j = m.group("ia") if m.group("ia") is not None else m.group("ib")
            terms.append(TreatCovInteraction(int(j or 1) - 1))
        else:
            terms.append(CovPower(int(m.group("cidx") or 1) - 1, int(m.group("cexp") or 1)))
    if TreatPower(1) not in terms:
        raise ConfigError("basis must contain the linear treatment term t")
    terms.remove(TreatPower(1))
    try:
        return BasisSpec((TreatPower(1), *terms), include_intercept=intercept)
    except InvariantViolation as exc:
        raise ConfigError(str(exc)) from None


def cubic_basis(d: int = 1, include_intercept: bool = True) -> BasisSpec:
    """``t + t^2 + t^3`` plus linear and quadratic terms in each covariate."""
    terms = [TreatPower(1), TreatPower(2), TreatPower(3)]
    for j in range(d):
        terms += [CovPower(j, 1), CovPower(j, 2)]
    return BasisSpec(tuple(terms), include_intercept)


@dataclass(frozen=True, eq=False)
class ExpandedDesign:
    design: np.ndarray
    deriv: np.ndarray
    spec: BasisSpec
    t: np.ndarray
    x: np.ndarray

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]

    def at_treatment(self, value: float) -> np.ndarray:
        """Design matrix with every unit's treatment set to ``value``."""
        design, _ = self.spec.evaluate(np.full(self.n, float(value)), self.x)
        return design


def expand(ds: Dataset, spec: BasisSpec) -> ExpandedDesign:
    design, deriv = spec.evaluate(ds.t, ds.x)
    for a in (design, deriv):
        a.setflags(write=False)
    return ExpandedDesign(design, deriv, spec, ds.t, ds.x)


def mean_derivatives(ed: ExpandedDesign) -> np.ndarray:
    """Column means of the derivative matrix (1 for ``t``, 0 for the intercept)."""
    alpha = ed.deriv.mean(axis=0)
    alpha[ed.spec.treatment_col] = 1.0
    if ed.spec.intercept_col is not None:
        alpha[ed.spec.intercept_col] = 0.0
    return alpha
