"""Least squares and lasso shared by all estimators.

The lasso objective follows the doubled-penalty convention

    (1/n) * ||y - X b||^2 + 2 * lam * sum_k w_k * |b_k|,

so ``lam`` here equals scikit-learn's ``alpha``. Columns with weight 0 are left
unpenalized; they are profiled out exactly before coordinate descent runs.
Penalized columns are internally rescaled to unit empirical second moment
(after profiling), and coefficients are reported on the original scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from numba import njit

from .errors import RankDeficient, TooFewRows

RANK_RTOL = 1e-10
CD_TOL = 1e-7
CD_MAX_SWEEPS = 100_000


@dataclass(frozen=True, eq=False)
class OlsFit:
    beta: np.ndarray
    residuals: np.ndarray
    sigma2_hat: float
    xtx_inv: np.ndarray

    @property
    def df_resid(self) -> int:
        n, p = self.residuals.shape[0], self.beta.shape[0]
        return n - p


def ols_fit(design, y) -> OlsFit:
    """Least squares through a column-pivoted Householder QR.

    Raises :class:`RankDeficient` when ``|R_kk| <= 1e-10 * |R_00|`` for some k.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise TooFewRows(f"OLS needs n > p (n={n}, p={p})")
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_RTOL * diag[0])) if diag[0] > 0 else 0
    if rank < p:
        raise RankDeficient(rank, p)
    coef_piv = scipy.linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(p)
    beta[piv] = coef_piv
    resid = y - X @ beta
    rinv = scipy.linalg.solve_triangular(R, np.eye(p))
    inv_piv = rinv @ rinv.T
    xtx_inv = np.empty((p, p))
    xtx_inv[np.ix_(piv, piv)] = inv_piv
    sigma2 = float(resid @ resid) / (n - p)
    return OlsFit(beta, resid, sigma2, xtx_inv)


# --------------------------------------------------------------------------
# coordinate descent kernel


@njit(cache=True)
def _cd_sweeps(G, c, yy, lam, w, beta, g, active, tol, budget, full, record, hist, nhist):
    """Covariance-update coordinate descent on the profiled, scaled problem.

    ``G = X'X/n``, ``c = X'y/n``, ``yy = y'y/n`` and ``g = c - G beta`` is kept
    current in place. Alternates sweeps over the active set with full sweeps;
    stops once a full sweep moves no coefficient by more than
    ``tol * max(1, max|beta|)``. Returns (sweeps, converged, full, nhist).
    """
    p = G.shape[0]
    it = 0
    while it < budget:
        maxd = 0.0
        bmax = 0.0
        for j in range(p):
            if not full and not active[j]:
                continue
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            bj = beta[j]
            z = g[j] + gjj * bj
            thr = lam * w[j]
            if z > thr:
                new = (z - thr) / gjj
            elif z < -thr:
                new = (z + thr) / gjj
            else:
                new = 0.0
            d = new - bj
            if d != 0.0:
                Gj = G[j]
                for k in range(p):
                    g[k] -= Gj[k] * d
                beta[j] = new
                if new != 0.0:
                    active[j] = True
                if abs(d) > maxd:
                    maxd = abs(d)
        for j in range(p):
            if abs(beta[j]) > bmax:
                bmax = abs(beta[j])
        it += 1
        if record:
            obj = yy
            for j in range(p):
                obj -= beta[j] * (c[j] + g[j])
                obj += 2.0 * lam * w[j] * abs(beta[j])
            hist[nhist] = obj
            nhist += 1
        small = maxd <= tol * max(1.0, bmax)
        if small and full:
            return it, True, full, nhist
        full = small
    return it, False, full, nhist


def _newton_step(G, c, lam, w, beta, g, active):
    """Exact minimization on the current sign pattern, stopped at the orthant boundary.

    The objective restricted to the face is a convex quadratic, so moving
    toward its minimizer never increases the lasso objective.
    """
    A = np.flatnonzero(beta)
    if A.size == 0:
        return False
    s = np.sign(beta[A])
    try:
        cho = scipy.linalg.cho_factor(G[np.ix_(A, A)], check_finite=False)
    except np.linalg.LinAlgError:
        return False
    target = scipy.linalg.cho_solve(cho, c[A] - lam * w[A] * s)
    if not np.all(np.isfinite(target)):
        return False
    cur = beta[A]
    flip = np.sign(target) != s
    if flip.any():
        ratio = cur[flip] / (cur[flip] - target[flip])
        step = float(ratio.min())
        new = cur + step * (target - cur)
        hit = np.flatnonzero(flip)[np.argmin(ratio)]
        new[hit] = 0.0
        new[np.sign(new) != s] = 0.0
    else:
        new = target
    delta = new - cur
    beta[A] = new
    g -= G[:, A] @ delta
    active[A[new == 0.0]] = False
    return True


NEWTON_AFTER = 30


class _PathSolver:
    """Warm-started solver state on one reduced problem, advanced one lambda at a time."""

    def __init__(self, G, c, yy, w, tol, max_sweeps, beta0=None):
        self.G, self.c, self.yy, self.w = G, c, yy, w
        self.tol, self.max_sweeps = tol, max_sweeps
        self.beta = np.zeros(G.shape[0]) if beta0 is None else beta0.copy()
        self.g = c - G @ self.beta
        self.active = self.beta != 0.0
        self.frozen = False
        self._prev_rss = yy

    def rss(self) -> float:
        return float(self.yy - self.beta @ (self.c + self.g))

    def solve(self, lam, record=False):
        """Returns (sweeps, converged, objective history)."""
        hist = np.empty(self.max_sweeps if record else 0)
        nhist = 0
        used = 0
        full = True
        done = False
        while used < self.max_sweeps and not done:
            budget = min(NEWTON_AFTER, self.max_sweeps - used)
            it, done, full, nhist = _cd_sweeps(self.G, self.c, self.yy, lam, self.w, self.beta,
                                               self.g, self.active, self.tol, budget, full,
                                               record, hist, nhist)
            used += it
            if not done and used < self.max_sweeps:
                _newton_step(self.G, self.c, lam, self.w, self.beta, self.g, self.active)
                full = True
        return used, done, hist[:nhist]

    def check_saturation(self, n_max_active, first):
        """Freeze the path once the fit saturates (see :func:`_cd_path`)."""
        rss = self.rss()
        self.frozen = (np.count_nonzero(self.beta) >= n_max_active
                       or rss <= 1e-3 * self.yy
                       or (not first and self._prev_rss - rss < 1e-5 * self.yy))
        self._prev_rss = rss


def _cd_path(G, c, yy, lambdas, w, beta0, tol, max_sweeps, record, n_max_active=None):
    """Solve along a decreasing lambda path with warm starts.

    Returns coefficients per lambda, sweeps used, convergence flags and (if
    ``record``) the objective after every sweep of the last lambda.

    With ``n_max_active`` set (cross-validation paths), the path stops once
    the fit saturates: at least ``n_max_active`` nonzero coefficients,
    explained fraction >= 0.999, or a relative change in fit < 1e-5. The last
    solution is then carried to the remaining lambdas.
    """
    L = lambdas.shape[0]
    out = np.zeros((L, G.shape[0]))
    sweeps = np.zeros(L, dtype=np.int64)
    conv = np.zeros(L, dtype=np.bool_)
    solver = _PathSolver(G, c, yy, w, tol, max_sweeps, beta0)
    hist = np.empty(0)
    for li in range(L):
        if solver.frozen:
            out[li:] = solver.beta
            conv[li:] = conv[li - 1]
            break
        rec = bool(record and li == L - 1)
        sweeps[li], conv[li], h = solver.solve(float(lambdas[li]), rec)
        if rec:
            hist = h
        out[li] = solver.beta
        if n_max_active is not None:
            solver.check_saturation(n_max_active, li == 0)
    return out, sweeps, conv, hist


# --------------------------------------------------------------------------
# sufficient statistics


@dataclass(frozen=True, eq=False)
class _Problem:
    """A lasso problem reduced to profiled, scaled cross-products."""

    G: np.ndarray
    c: np.ndarray
    yy: float
    scale: np.ndarray
    unpen_solve_resp: np.ndarray  # Muu^{-1} M_u,resp
    unpen_solve_pen: np.ndarray  # Muu^{-1} M_u,pen
    n: int


def _reduce(M: np.ndarray, n: int, resp: int, pen: np.ndarray, unpen: np.ndarray,
            standardize: bool = True) -> _Problem:
    Mpp = M[np.ix_(pen, pen)]
    Mpr = M[pen, resp]
    Mrr = M[resp, resp]
    if unpen.size:
        Muu = M[np.ix_(unpen, unpen)]
        Mup = M[np.ix_(unpen, pen)]
        Mur = M[unpen, resp]
        cho = scipy.linalg.cho_factor(Muu)
        sol_p = scipy.linalg.cho_solve(cho, Mup)
        sol_r = scipy.linalg.cho_solve(cho, Mur)
        Mpp -= Mup.T @ sol_p
        Mpr = Mpr - Mup.T @ sol_r
        Mrr = Mrr - Mur @ sol_r
    else:
        sol_p = np.zeros((0, pen.size))
        sol_r = np.zeros(0)
    G = Mpp
    G /= n
    c = Mpr / n
    diag = np.clip(np.diag(G), 0.0, None)
    if standardize:
        scale = np.sqrt(diag)
        tiny = scale <= 1e-12 * max(1.0, scale.max(initial=0.0))
        scale[tiny] = 1.0
        G /= scale[:, None]
        G /= scale[None, :]
        c = c / scale
        G[tiny, :] = 0.0
        G[:, tiny] = 0.0
        c[tiny] = 0.0
    else:
        scale = np.ones(pen.size)
    return _Problem(np.ascontiguousarray(G), c, float(Mrr / n), scale, sol_r, sol_p, n)


def _weights(penalty_weights, p) -> np.ndarray:
    w = np.ones(p) if penalty_weights is None else np.asarray(penalty_weights, dtype=float)
    if w.shape != (p,) or np.any(w < 0):
        raise ValueError("penalty_weights must be a non-negative vector of length p")
    return w


def _cross(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    A = np.column_stack([X, y])
    return A.T @ A


@dataclass(frozen=True, eq=False)
class LassoFit:
    beta: np.ndarray
    lam: float
    residuals: np.ndarray
    n_iter: int
    converged: bool
    scale: np.ndarray = field(repr=False)
    penalty_weights: np.ndarray = field(repr=False)
    objective_trace: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def lambda_(self) -> float:
        return self.lam


def _solve(prob: _Problem, lambdas, w_pen, tol, max_sweeps, record=False, n_max_active=None):
    beta0 = np.zeros(prob.G.shape[0])
    return _cd_path(prob.G, prob.c, prob.yy, np.asarray(lambdas, dtype=float),
                    w_pen, beta0, tol, max_sweeps, record, n_max_active)


def _assemble(prob: _Problem, B_scaled: np.ndarray, pen, unpen, p) -> np.ndarray:
    """Map scaled penalized coefficients (rows of ``B_scaled``) to full original-scale vectors."""
    B_scaled = np.atleast_2d(B_scaled)
    out = np.zeros((B_scaled.shape[0], p))
    b_pen = B_scaled / prob.scale
    out[:, pen] = b_pen
    if unpen.size:
        out[:, unpen] = prob.unpen_solve_resp[None, :] - b_pen @ prob.unpen_solve_pen.T
    return out


def _split(w):
    pen = np.flatnonzero(w > 0)
    unpen = np.flatnonzero(w == 0)
    return pen, unpen


def lasso_fit(design, y, lam: float, penalty_weights=None, *, standardize: bool = True,
              tol: float = CD_TOL, max_sweeps: int = CD_MAX_SWEEPS,
              record_objective: bool = False, lambda_path: Optional[Sequence[float]] = None) -> LassoFit:
    """Lasso at penalty ``lam`` by coordinate descent.

    ``lambda_path`` (decreasing, ending at ``lam``) warm-starts the fit.
    Failure to converge is reported through ``converged``, not raised.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    w = _weights(penalty_weights, p)
    pen, unpen = _split(w)
    M = _cross(X, y)
    prob = _reduce(M, n, p, pen, unpen, standardize)
    path = [lam] if lambda_path is None else list(lambda_path)
    if path[-1] != lam:
        path.append(lam)
    B, sweeps, conv, hist = _solve(prob, path, w[pen], tol, max_sweeps, record_objective)
    beta = _assemble(prob, B[-1], pen, unpen, p)[0]
    scale = np.ones(p)
    scale[pen] = prob.scale
    return LassoFit(beta, float(lam), y - X @ beta, int(sweeps.sum()), bool(conv[-1]),
                    scale, w, hist if record_objective else None)


def lasso_objective(design, y, beta, lam, penalty_weights=None, scale=None) -> float:
    X = np.asarray(design, dtype=float)
    n, p = X.shape
    w = _weights(penalty_weights, p)
    s = np.ones(p) if scale is None else scale
    r = np.asarray(y) - X @ beta
    return float(r @ r / n + 2 * lam * np.sum(w * s * np.abs(beta)))


def kkt_violation(design, fit: LassoFit) -> float:
    """Largest violation of the lasso optimality conditions, in scaled units.

    With ``g_k = x_k' r / (n * scale_k)``: active coordinates need
    ``g_k = lam * w_k * sign(b_k)``, inactive ones ``|g_k| <= lam * w_k``.
    """
    X = np.asarray(design, dtype=float)
    n = X.shape[0]
    g = X.T @ fit.residuals / n / fit.scale
    thr = fit.lam * fit.penalty_weights
    active = fit.beta != 0
    viol = np.where(active, np.abs(g - thr * np.sign(fit.beta)), np.maximum(np.abs(g) - thr, 0.0))
    return float(viol.max(initial=0.0))


# --------------------------------------------------------------------------
# cross-validation


@dataclass(frozen=True, eq=False)
class CvResult:
    lambda_grid: np.ndarray
    cv_error: np.ndarray
    lambda_min: float
    cv_se: np.ndarray = field(repr=False)
    folds: np.ndarray = field(repr=False)

    @property
    def index_min(self) -> int:
        return int(np.argmin(self.cv_error))


def fold_ids(n: int, k_folds: int, rng_seed: int) -> np.ndarray:
    """Balanced fold labels assigned through a seeded shuffle."""
    perm = np.random.default_rng(rng_seed).permutation(n)
    ids = np.empty(n, dtype=np.int64)
    ids[perm] = np.arange(n) % k_folds
    return ids


class FoldedCrossProducts:
    """Cross-products of ``A = [columns]`` on the full sample and on each fold.

    Training-set cross-products are full minus held-out, so one pass over the
    data serves every fold and every response/design split of ``A``.
    """

    def __init__(self, A: np.ndarray, k_folds: Optional[int] = None, rng_seed: int = 0):
        n = A.shape[0]
        self.A = A
        self.n = n
        self.full = A.T @ A
        self.k = k_folds
        if k_folds is None:
            self.folds = None
            self.held = []
            return
        if k_folds < 2:
            raise ValueError("k_folds must be >= 2")
        if n < k_folds:
            raise TooFewRows(f"need n >= k_folds (n={n}, k={k_folds})")
        self.folds = fold_ids(n, k_folds, rng_seed)
        self.held = [A[self.folds == f].T @ A[self.folds == f] for f in range(k_folds)]

    def cv(self, resp: int, cols: np.ndarray, w: np.ndarray, grid_size: int = 100,
           standardize: bool = True, tol: float = CD_TOL,
           max_sweeps: int = CD_MAX_SWEEPS, patience: Optional[int] = None) -> CvResult:
        """Cross-validate the lasso of column ``resp`` on columns ``cols``.

        Folds advance together along the grid. With ``patience`` set, the
        scan stops once the mean held-out error has exceeded its running
        minimum for ``patience`` consecutive grid points; the returned grid
        and errors then cover only the evaluated prefix.
        """
        if self.folds is None:
            raise ValueError("cross-validation needs k_folds")
        cols = np.asarray(cols)
        p = cols.size
        pen_l, unpen_l = _split(w)
        pen, unpen = cols[pen_l], cols[unpen_l]
        prob = _reduce(self.full, self.n, resp, pen, unpen, standardize)
        grid = lambda_grid(prob, w[pen_l], grid_size)
        w_pen = w[pen_l]
        subs, solvers, tests, caps = [], [], [], []
        for f in range(self.k):
            test = self.folds == f
            ntr = self.n - int(test.sum())
            sub = _reduce(self.full - self.held[f], ntr, resp, pen, unpen, standardize)
            subs.append(sub)
            solvers.append(_PathSolver(sub.G, sub.c, sub.yy, w_pen, tol, max_sweeps))
            tests.append((self.A[test][:, cols], self.A[test, resp]))
            caps.append(ntr - unpen.size - 1)
        errs = np.empty((self.k, grid.size))
        best, since = np.inf, 0
        used = grid.size
        for li, lam in enumerate(grid):
            for f, solver in enumerate(solvers):
                if not solver.frozen:
                    solver.solve(float(lam))
                    solver.check_saturation(caps[f], li == 0)
                coef = _assemble(subs[f], solver.beta, pen_l, unpen_l, p)[0]
                Xte, yte = tests[f]
                errs[f, li] = np.mean((yte - Xte @ coef) ** 2)
            m = errs[:, li].mean()
            if m < best:
                best, since = m, 0
            else:
                since += 1
            if patience is not None and since >= patience:
                used = li + 1
                break
        errs = errs[:, :used]
        grid = grid[:used]
        mean = errs.mean(axis=0)
        se = errs.std(axis=0, ddof=1) / np.sqrt(self.k)
        if not np.all(np.isfinite(mean)):
            raise FloatingPointError("non-finite cross-validation error")
        return CvResult(grid, mean, float(grid[int(np.argmin(mean))]), se, self.folds)

    def fit(self, resp: int, cols: np.ndarray, w: np.ndarray, lam: float,
            path: Optional[Sequence[float]] = None, standardize: bool = True,
            tol: float = CD_TOL, max_sweeps: int = CD_MAX_SWEEPS) -> LassoFit:
        """Full-sample fit at ``lam``, warm-started down ``path``.

        Without ``path`` the warm start runs down the default 100-point grid
        to ``lam``.
        """
        if lam < 0:
            raise ValueError("lambda must be >= 0")
        cols = np.asarray(cols, dtype=np.int64)
        p = cols.size
        pen_l, unpen_l = _split(w)
        prob = _reduce(self.full, self.n, resp, cols[pen_l], cols[unpen_l], standardize)
        if path is None:
            grid = lambda_grid(prob, w[pen_l], 100)
            path = grid[grid > lam]
        path = np.append(np.asarray(path, dtype=float)[np.asarray(path) > lam], lam)
        B, sweeps, conv, _ = _solve(prob, path, w[pen_l], tol, max_sweeps)
        beta = _assemble(prob, B[-1], pen_l, unpen_l, p)[0]
        scale = np.ones(p)
        scale[pen_l] = prob.scale
        resid = self.A[:, resp] - self.A[:, cols] @ beta
        return LassoFit(beta, float(lam), resid, int(sweeps.sum()), bool(conv[-1]), scale, w)


def lambda_grid(prob: _Problem, w_pen: np.ndarray, grid_size: int) -> np.ndarray:
    """Log-spaced from ``lam_max`` down to ``1e-4 * lam_max``."""
    with np.errstate(divide="ignore"):
        ratios = np.abs(prob.c) / w_pen
    lam_max = float(np.max(ratios, initial=0.0))
    if not np.isfinite(lam_max) or lam_max <= 0:
        lam_max = 1.0
    return np.logspace(np.log10(lam_max), np.log10(lam_max * 1e-4), grid_size)


def lasso_cv(design, y, k_folds: int = 10, grid_size: int = 100, rng_seed: int = 0,
             penalty_weights=None, *, standardize: bool = True,
             patience: Optional[int] = None) -> CvResult:
    """K-fold cross-validated lasso over a log-spaced grid; picks the minimum-MSE lambda."""
    X = np.asarray(design, dtype=float)
    n, p = X.shape
    w = _weights(penalty_weights, p)
    fcp = FoldedCrossProducts(np.column_stack([X, np.asarray(y, dtype=float)]), k_folds, rng_seed)
    return fcp.cv(p, np.arange(p), w, grid_size, standardize, patience=patience)
