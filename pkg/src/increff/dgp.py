"""Simulation scenarios with oracle access to the true outcome surface and scores.

Each scenario writes its outcome mean as a structural part that does not
involve the hidden variable ``h`` plus an optional hidden part. The
observational mean ``m_obs(t, x) = E[m(t, x, H) | T=t, X=x]`` replaces the
hidden part by its posterior expectation, obtained in closed form or by a
fixed Gauss-Legendre rule over the posterior of ``H``.

Random draws come from :class:`~increff.rng.CounterRng`, keyed by
``(seed, variable, row)``, so any row range is reproducible on its own.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional

import numpy as np
import scipy.integrate
import scipy.interpolate
import scipy.optimize
import scipy.special

from .data import Dataset, write_csv
from .errors import InvalidParams, OracleUnavailable
from .rng import CounterRng

SCENARIOS = (
    "GaussianCubic",
    "HeavyTailCubic",
    "SparseHighDim",
    "LocalConfounded",
    "Heteroscedastic",
    "LocalIgnorabilityExample",
)

# variable ids of the counter streams
_V_H, _V_ET, _V_EX, _V_EY, _V_T = 1, 2, 3, 4, 5
_V_X = 10
_V_SUPPORT_B, _V_COEF_B, _V_SUPPORT_G, _V_COEF_G = 20, 21, 22, 23
_V_POSTERIOR = 30

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_T4_LOGC = float(scipy.special.gammaln(2.5) - scipy.special.gammaln(2.0) - 0.5 * math.log(4 * math.pi))

_DEFAULTS: dict[str, dict] = {
    "GaussianCubic": {},
    "HeavyTailCubic": {},
    "LocalConfounded": {"a": 0.0, "b": 0.0},
    "Heteroscedastic": {},
    "LocalIgnorabilityExample": {},
    "SparseHighDim": {"p": 703, "s": 26, "rate": math.sqrt(10.0), "noise": "gaussian",
                      "n_interact": 36, "param_seed": None},
}


@dataclass(frozen=True)
class DgpSpec:
    """Scenario name, sample size, seed and scenario parameters.

    For ``LocalConfounded`` the interval is given either directly (``a``,
    ``b``) or as a confounding ratio ``r`` with lower tail mass ``u``, in
    which case ``a = F_T^{-1}(u)`` and ``b = F_T^{-1}(u + r)``.
    """

    scenario: str
    n: int
    seed: int = 0
    params: tuple = ()

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise InvalidParams(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if int(self.n) < 1:
            raise InvalidParams("n must be >= 1")
        raw = dict(self.params) if not isinstance(self.params, tuple) else dict(self.params)
        merged = {**_DEFAULTS[self.scenario], **raw}
        unknown = set(merged) - set(_DEFAULTS[self.scenario]) - {"r", "u"}
        if unknown:
            raise InvalidParams(f"unknown parameters for {self.scenario}: {sorted(unknown)}")
        if self.scenario == "LocalConfounded":
            merged = _resolve_interval(merged)
        if self.scenario == "SparseHighDim":
            _check_sparse(merged)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "params", tuple(sorted(merged.items())))

    def param(self, key: str):
        return dict(self.params)[key]

    @property
    def param_dict(self) -> dict:
        return dict(self.params)

    def with_(self, **changes) -> "DgpSpec":
        """Copy with ``n``/``seed`` and/or parameters replaced."""
        n = changes.pop("n", self.n)
        seed = changes.pop("seed", self.seed)
        params = self.param_dict
        if self.scenario == "LocalConfounded" and ({"r", "u"} & set(changes)):
            params.pop("a", None)
            params.pop("b", None)
        params.update(changes)
        return DgpSpec(self.scenario, n, seed, tuple(params.items()))


def make_spec(scenario: str, n: int, seed: int = 0, **params) -> DgpSpec:
    return DgpSpec(scenario, n, seed, tuple(params.items()))


def _resolve_interval(p: dict) -> dict:
    p = dict(p)
    if "r" in p:
        r = float(p.pop("r"))
        if not 0.0 <= r < 1.0:
            raise InvalidParams("confounding ratio r must lie in [0, 1)")
        u = float(p.pop("u", (1.0 - r) / 2.0))
        if not (0.0 < u and u + r < 1.0) and r > 0:
            raise InvalidParams("need 0 < u and u + r < 1")
        if r == 0.0:
            q = heavy_t_quantile(min(max(u, 1e-12), 1 - 1e-12))
            p["a"], p["b"] = q, q
        else:
            p["a"], p["b"] = heavy_t_quantile(u), heavy_t_quantile(u + r)
        p["r"] = r
        p["u"] = u
    elif "u" in p:
        raise InvalidParams("u is only meaningful together with r")
    a, b = float(p["a"]), float(p["b"])
    if not a <= b:
        raise InvalidParams(f"LocalConfounded needs a <= b (got a={a}, b={b})")
    p["a"], p["b"] = a, b
    return p


def _check_sparse(p: dict) -> None:
    n_main = int(p["p"]) - int(p["n_interact"]) - 1
    if n_main < max(1, int(p["n_interact"])):
        raise InvalidParams("SparseHighDim needs p - n_interact - 1 >= n_interact main effects")
    if not 0 <= int(p["s"]) <= int(p["p"]):
        raise InvalidParams("need 0 <= s <= p")
    if float(p["rate"]) <= 0:
        raise InvalidParams("rate must be positive")
    if p["noise"] not in ("gaussian", "t3"):
        raise InvalidParams("noise must be 'gaussian' or 't3'")


# --------------------------------------------------------------------------
# t4 helpers


def _t4_logpdf(u):
    return _T4_LOGC - 2.5 * np.log1p(u * u / 4.0)


def _t4_score(u):
    return -5.0 * u / (4.0 + u * u)


def _t4_pdf(u):
    return np.exp(_t4_logpdf(u))


@functools.lru_cache(maxsize=1)
def _heavy_t_cdf_table():
    """Monotone cubic interpolant of the CDF of T = H + e_t with H, e_t iid t4."""
    s = np.sinh(np.linspace(-np.arcsinh(2000.0), np.arcsinh(2000.0), 2401))
    F, _ = scipy.integrate.quad_vec(lambda h: _t4_pdf(h) * scipy.special.stdtr(4, s - h),
                                    -np.inf, np.inf, epsabs=1e-12, epsrel=1e-10)
    F = np.maximum.accumulate(np.clip(F, 0.0, 1.0))
    return s, scipy.interpolate.PchipInterpolator(s, F, extrapolate=False)


def heavy_t_quantile(u: float) -> float:
    """Quantile of the treatment in the t4 scenarios."""
    if not 0.0 < u < 1.0:
        raise InvalidParams("quantile level must lie in (0, 1)")
    s, cdf = _heavy_t_cdf_table()
    return float(scipy.optimize.brentq(lambda v: cdf(v) - u, s[0], s[-1], xtol=1e-13))


def heavy_t_cdf(v) -> np.ndarray:
    s, cdf = _heavy_t_cdf_table()
    return cdf(np.clip(v, s[0], s[-1]))


def f_conf(h, a: float, b: float):
    """0 below ``a``, ``h - a`` on ``[a, b)``, ``b - a`` from ``b`` on."""
    return np.clip(h, a, b) - a


def f_conf_deriv(h, a: float, b: float):
    return ((h >= a) & (h < b)).astype(float)


# --------------------------------------------------------------------------
# posterior quadrature for H | T=t, X=x in the t4 scenarios

_GL_NODES = 12
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_NODES)
_POST_HALF_WIDTH = 16.0
_CENTER_OFFSETS = np.array([-4.0, -1.5, 0.0, 1.5, 4.0])
_CHUNK = 4096


class _PosteriorRule:
    """Composite Gauss-Legendre rule per row for the density of ``H`` given ``(t, x)``.

    The prior of ``H``, ``e_t`` and ``e_x`` is t4, so the posterior can have
    a mode near each of ``0``, ``t`` and ``x``. Each row's range
    ``[min(0, t, x) - 16, max(0, t, x) + 16]`` is cut at fixed offsets around
    those three centers and at ``breaks`` (kinks of the integrand), and every
    piece gets a 12-node rule. Nodes depend only on the base point, so finite
    differences in ``t`` reuse the same rule.
    """

    def __init__(self, t, x, breaks=()):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        lo = np.minimum(np.minimum(t, x), 0.0) - _POST_HALF_WIDTH
        hi = np.maximum(np.maximum(t, x), 0.0) + _POST_HALF_WIDTH
        centers = np.stack([np.zeros_like(t), t, x], axis=1)
        cuts = (centers[:, :, None] + _CENTER_OFFSETS).reshape(t.shape[0], -1)
        inner = [np.full((t.shape[0], 1), b) for b in sorted(breaks)]
        edges = np.concatenate([lo[:, None], cuts, *inner, hi[:, None]], axis=1)
        edges = np.sort(np.clip(edges, lo[:, None], hi[:, None]), axis=1)
        left, right = edges[:, :-1], edges[:, 1:]
        half = 0.5 * (right - left)
        mid = 0.5 * (right + left)
        self.nodes = (mid[:, :, None] + half[:, :, None] * _GL_X).reshape(t.shape[0], -1)
        base_w = (half[:, :, None] * _GL_W).reshape(t.shape[0], -1)
        with np.errstate(divide="ignore"):
            self._log_base = np.log(base_w)
        self._log_prior = self._log_base + _t4_logpdf(self.nodes) + _t4_logpdf(x[:, None] - self.nodes)

    def weights(self, t) -> np.ndarray:
        lw = self._log_prior + _t4_logpdf(np.asarray(t, dtype=float)[:, None] - self.nodes)
        lw -= lw.max(axis=1, keepdims=True)
        w = np.exp(lw)
        return w / w.sum(axis=1, keepdims=True)


# --------------------------------------------------------------------------
# oracle


@dataclass(frozen=True, eq=False)
class OracleDgp:
    """True outcome mean, its t-derivative and the treatment scores of a scenario.

    ``m = m_struct(t, x) + m_hidden(t, x, h)``; the hidden part is absent
    (``None``) when the outcome does not involve ``h``.
    """

    spec: DgpSpec
    m_struct: Callable
    dm_struct_dt: Callable
    m_hidden: Optional[Callable] = None
    dm_hidden_dt: Optional[Callable] = None
    hidden_obs: Optional[Callable] = None
    score_obs_fn: Optional[Callable] = None
    score_full_fn: Optional[Callable] = None
    sample_h: Optional[Callable] = None
    has_h: bool = False
    extras: dict = field(default_factory=dict)

    def _needs_h(self, h):
        if self.m_hidden is not None and h is None:
            raise OracleUnavailable("this scenario's outcome depends on h, which was not supplied")

    def m(self, t, x, h=None):
        self._needs_h(h)
        out = self.m_struct(t, x)
        return out if self.m_hidden is None else out + self.m_hidden(t, x, h)

    def dm_dt(self, t, x, h=None):
        self._needs_h(h)
        out = self.dm_struct_dt(t, x)
        return out if self.m_hidden is None else out + self.dm_hidden_dt(t, x, h)

    def m_obs(self, t, x):
        out = self.m_struct(t, x)
        return out if self.hidden_obs is None else out + self.hidden_obs(t, x)

    def dm_obs_dt(self, t, x):
        """Analytic structural derivative plus central differences of the hidden part."""
        out = self.dm_struct_dt(t, x)
        if self.hidden_obs is None:
            return out
        t = np.asarray(t, dtype=float)
        step = 1e-4 * (1.0 + np.abs(t))
        return out + (self.hidden_obs(t + step, x) - self.hidden_obs(t - step, x)) / (2 * step)

    def score_obs(self, t, x):
        if self.score_obs_fn is None:
            raise OracleUnavailable(f"{self.spec.scenario} has no observational score")
        return self.score_obs_fn(t, x)

    def score_full(self, t, x, h=None):
        if self.score_full_fn is None:
            raise OracleUnavailable(f"{self.spec.scenario} has no full-information score")
        return self.score_full_fn(t, x, h)

    def observational(self, t, x):
        """``(m_obs, dm_obs_dt, score_obs)`` in one pass; quadrature scenarios share the rule."""
        fast = self.extras.get("observational")
        if fast is not None:
            return fast(t, x)
        return self.m_obs(t, x), self.dm_obs_dt(t, x), self.score_obs(t, x)


def _x1(x):
    x = np.asarray(x, dtype=float)
    return x[:, 0] if x.ndim == 2 else x


# --------------------------------------------------------------------------
# scenarios


def _cubic_struct(t, x):
    return 3.0 * t + t * t + _x1(x)


def _cubic_struct_dt(t, x):
    return 3.0 + 2.0 * np.asarray(t, dtype=float)


def _gaussian_cubic(spec: DgpSpec, rng: CounterRng):
    n = spec.n
    h = rng.normal(_V_H, 0, n)
    t = h + rng.normal(_V_ET, 0, n)
    x = h + rng.normal(_V_EX, 0, n)
    y = _cubic_struct(t, x) + rng.uniform(_V_EY, 0, n, -0.5, 0.5)

    def sample_h(t0, x0, size, r):
        return (t0 + x0) / 3.0 + math.sqrt(1.0 / 3.0) * r.normal(_V_POSTERIOR, 0, size)

    oracle = OracleDgp(
        spec, _cubic_struct, _cubic_struct_dt,
        score_obs_fn=lambda t, x: -(np.asarray(t) - _x1(x) / 2.0) / 1.5,
        score_full_fn=lambda t, x, h: -(np.asarray(t) - h),
        sample_h=sample_h, has_h=True,
    )
    return Dataset(y, t, x.reshape(-1, 1), h), oracle


def _t4_draws(spec, rng):
    n = spec.n
    h = rng.student_t(_V_H, 0, n, 4)
    t = h + rng.student_t(_V_ET, 0, n, 4)
    x = h + rng.student_t(_V_EX, 0, n, 4)
    ey = rng.uniform(_V_EY, 0, n, -0.5, 0.5)
    return h, t, x, ey


def _t4_oracle(spec: DgpSpec, a=None, b=None) -> OracleDgp:
    hidden = a is not None and b > a
    breaks = (a, b) if hidden else ()

    def post_stats(t, x, want_hidden):
        t = np.asarray(t, dtype=float)
        x = _x1(x)
        n = t.shape[0]
        score = np.empty(n)
        hid = np.zeros(n)
        dhid = np.zeros(n)
        for s in range(0, n, _CHUNK):
            sl = slice(s, s + _CHUNK)
            rule = _PosteriorRule(t[sl], x[sl], breaks)
            w = rule.weights(t[sl])
            score[sl] = np.sum(w * _t4_score(t[sl, None] - rule.nodes), axis=1)
            if want_hidden:
                fh = f_conf(rule.nodes, a, b)
                hid[sl] = np.sum(w * fh, axis=1)
                step = 1e-4 * (1.0 + np.abs(t[sl]))
                up = np.sum(rule.weights(t[sl] + step) * fh, axis=1)
                dn = np.sum(rule.weights(t[sl] - step) * fh, axis=1)
                dhid[sl] = (up - dn) / (2 * step)
        return score, hid, dhid

    def hidden_obs(t, x):
        t = np.asarray(t, dtype=float)
        x = _x1(x)
        out = np.empty(t.shape[0])
        for s in range(0, t.shape[0], _CHUNK):
            sl = slice(s, s + _CHUNK)
            rule = _PosteriorRule(t[sl], x[sl], breaks)
            out[sl] = np.sum(rule.weights(t[sl]) * f_conf(rule.nodes, a, b), axis=1)
        return out

    def observational(t, x):
        score, hid, dhid = post_stats(t, x, hidden)
        t = np.asarray(t, dtype=float)
        return _cubic_struct(t, x) + hid, _cubic_struct_dt(t, x) + dhid, score

    def sample_h(t0, x0, size, r):
        rule = _PosteriorRule(np.array([t0]), np.array([x0]), breaks)
        w = rule.weights(np.array([t0]))[0]
        cdf = np.cumsum(w)
        idx = np.searchsorted(cdf, r.uniform01(_V_POSTERIOR, 0, size)[:, 0] * cdf[-1])
        return rule.nodes[0, np.minimum(idx, cdf.size - 1)]

    kw = {}
    if hidden:
        kw = dict(m_hidden=lambda t, x, h: f_conf(h, a, b),
                  dm_hidden_dt=lambda t, x, h: np.zeros_like(np.asarray(t, dtype=float)),
                  hidden_obs=hidden_obs)
    return OracleDgp(
        spec, _cubic_struct, _cubic_struct_dt,
        score_obs_fn=lambda t, x: post_stats(t, x, False)[0],
        score_full_fn=lambda t, x, h: _t4_score(np.asarray(t) - h),
        sample_h=sample_h, has_h=True, extras={"observational": observational}, **kw,
    )


def _heavy_tail_cubic(spec, rng):
    h, t, x, ey = _t4_draws(spec, rng)
    y = _cubic_struct(t, x) + ey
    return Dataset(y, t, x.reshape(-1, 1), h), _t4_oracle(spec)


def _local_confounded(spec, rng):
    a, b = spec.param("a"), spec.param("b")
    h, t, x, ey = _t4_draws(spec, rng)
    y = _cubic_struct(t, x) + ey
    if b > a:
        y = y + f_conf(h, a, b)
    return Dataset(y, t, x.reshape(-1, 1), h), _t4_oracle(spec, a, b)


def _heteroscedastic(spec, rng):
    n = spec.n
    t = rng.uniform(_V_T, 0, n, -0.5, 1.5)
    eps = rng.uniform(_V_EY, 0, n, -0.5, 0.5)
    y = t * t + np.abs(t) * eps
    zero = lambda t, x, h=None: np.zeros_like(np.asarray(t, dtype=float))  # noqa: E731
    oracle = OracleDgp(
        spec, lambda t, x: np.asarray(t, dtype=float) ** 2, lambda t, x: 2.0 * np.asarray(t, dtype=float),
        score_obs_fn=lambda t, x: zero(t, x), score_full_fn=zero,
    )
    return Dataset(y, t, np.empty((n, 0))), oracle


def _local_ignorability(spec, rng):
    n = spec.n
    h = rng.normal(_V_H, 0, n)
    eps = rng.normal(_V_ET, 0, n)
    t = np.where(h >= 0, np.abs(eps), -np.abs(eps))
    m_hidden = lambda t, x, h: (t - 1.0) * (t >= 1.0) * h  # noqa: E731

    def sample_h(t0, x0, size, r):
        z = np.abs(r.normal(_V_POSTERIOR, 0, size))
        return z if t0 >= 0 else -z

    oracle = OracleDgp(
        spec, lambda t, x: 2.0 * np.asarray(t, dtype=float),
        lambda t, x: np.full_like(np.asarray(t, dtype=float), 2.0),
        m_hidden=m_hidden,
        dm_hidden_dt=lambda t, x, h: (np.asarray(t) >= 1.0) * h,
        hidden_obs=lambda t, x: np.maximum(np.asarray(t, dtype=float) - 1.0, 0.0) * _SQRT_2_OVER_PI,
        score_obs_fn=lambda t, x: -np.asarray(t, dtype=float),
        score_full_fn=lambda t, x, h: -np.asarray(t, dtype=float),
        sample_h=sample_h, has_h=True,
    )
    y = 2.0 * t + m_hidden(t, None, h)
    return Dataset(y, t, np.empty((n, 0)), h), oracle


@dataclass(frozen=True, eq=False)
class SparseTruth:
    """Coefficients of the sparse scenario.

    ``beta`` has the main effects first, then the treatment interactions
    with the first ``n_interact`` covariates, then the ``t^2`` coefficient.
    """

    beta: np.ndarray
    gamma: np.ndarray
    n_main: int
    n_interact: int

    @property
    def beta_main(self):
        return self.beta[: self.n_main]

    @property
    def beta_interact(self):
        return self.beta[self.n_main: self.n_main + self.n_interact]

    @property
    def beta_quad(self) -> float:
        return float(self.beta[-1])


def _sparse_truth(spec: DgpSpec) -> SparseTruth:
    p_tot = int(spec.param("p"))
    s = int(spec.param("s"))
    rate = float(spec.param("rate"))
    k_int = int(spec.param("n_interact"))
    n_main = p_tot - k_int - 1
    pseed = spec.param("param_seed")
    prng = CounterRng(spec.seed if pseed is None else int(pseed))
    support = np.argsort(prng.uniform01(_V_SUPPORT_B, 0, p_tot)[:, 0], kind="stable")[:s]
    beta = np.zeros(p_tot)
    draws = prng.exponential(_V_COEF_B, 0, p_tot, rate)
    on = np.zeros(p_tot, dtype=bool)
    on[support] = True
    on[-1] = True
    beta[on] = draws[on]
    g_support = np.argsort(prng.uniform01(_V_SUPPORT_G, 0, n_main)[:, 0], kind="stable")[:min(s, n_main)]
    gamma = np.zeros(n_main)
    gamma[g_support] = prng.exponential(_V_COEF_G, 0, n_main, rate)[g_support]
    return SparseTruth(beta, gamma, n_main, k_int)


def _sparse(spec, rng):
    truth = _sparse_truth(spec)
    n = spec.n
    x = rng.normal(_V_X, 0, n, truth.n_main).reshape(n, truth.n_main)
    t = x @ truth.gamma + rng.normal(_V_ET, 0, n)
    if spec.param("noise") == "t3":
        eps = rng.student_t(_V_EY, 0, n, 3)
    else:
        eps = rng.normal(_V_EY, 0, n)
    k = truth.n_interact

    def m_struct(t, x):
        t = np.asarray(t, dtype=float)
        return x @ truth.beta_main + t * (x[:, :k] @ truth.beta_interact) + t * t * truth.beta_quad

    def dm_dt(t, x):
        return x[:, :k] @ truth.beta_interact + 2.0 * np.asarray(t, dtype=float) * truth.beta_quad

    score = lambda t, x: -(np.asarray(t, dtype=float) - x @ truth.gamma)  # noqa: E731
    oracle = OracleDgp(spec, m_struct, dm_dt, score_obs_fn=score,
                       score_full_fn=lambda t, x, h: score(t, x), extras={"truth": truth})
    y = m_struct(t, x) + eps
    return Dataset(y, t, x), oracle


_BUILDERS = {
    "GaussianCubic": _gaussian_cubic,
    "HeavyTailCubic": _heavy_tail_cubic,
    "LocalConfounded": _local_confounded,
    "Heteroscedastic": _heteroscedastic,
    "LocalIgnorabilityExample": _local_ignorability,
    "SparseHighDim": _sparse,
}


def generate(spec: DgpSpec) -> tuple[Dataset, OracleDgp]:
    """Draw ``spec.n`` rows; the ``h`` column is attached when the scenario has one."""
    return _BUILDERS[spec.scenario](spec, CounterRng(spec.seed))


def oracle_for(spec: DgpSpec) -> OracleDgp:
    """Oracle without drawing a sample of the requested size."""
    return generate(spec.with_(n=1))[1] if spec.scenario != "SparseHighDim" else generate(spec)[1]


def sparse_highdim_generate(n: int, p: int = 703, s: int = 26, rate: float = math.sqrt(10.0),
                            seed: int = 0, noise: str = "gaussian"):
    """Sparse scenario; returns ``(dataset, oracle, true_beta, true_gamma)``."""
    spec = make_spec("SparseHighDim", n, seed, p=p, s=s, rate=rate, noise=noise)
    ds, oracle = generate(spec)
    truth = oracle.extras["truth"]
    return ds, oracle, truth.beta.copy(), truth.gamma.copy()


def sparse_basis_text(n_main: int = 666, n_interact: int = 36) -> str:
    """Correctly specified basis for the sparse scenario."""
    terms = ["1", "t"] + [f"x{j + 1}" for j in range(n_main)]
    terms += [f"t*x{j + 1}" for j in range(n_interact)] + ["t^2"]
    return " + ".join(terms)


# --------------------------------------------------------------------------
# identification check


@dataclass(frozen=True)
class Prop1Result:
    max_abs_gap: float
    mc_se: float
    lhs: np.ndarray
    rhs: np.ndarray
    se: np.ndarray

    @property
    def within(self) -> bool:
        """Every gap within 3 Monte Carlo SEs plus a finite-difference allowance of 1e-6."""
        return bool(np.all(np.abs(self.lhs - self.rhs) <= 3 * self.se + 1e-6))


def prop1_check(oracle: OracleDgp, t_grid, x_point=None, mc_n: int = 100_000,
                seed: int = 0) -> Prop1Result:
    """Compare ``E[Y'(t) | T=t, X=x]`` with ``d/dt E[Y | T=t, X=x]`` on a grid of ``t``.

    The left side averages the oracle derivative over ``mc_n`` posterior
    draws of ``H``; the right side is a central difference of ``m_obs``
    with step ``1e-4 * (1 + |t|)``.
    """
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    d = 0 if oracle.spec.scenario in ("Heteroscedastic", "LocalIgnorabilityExample") else None
    if oracle.spec.scenario == "SparseHighDim":
        raise OracleUnavailable("prop1_check needs a low-dimensional scenario")
    xv = np.zeros(0) if d == 0 else np.atleast_1d(np.asarray(0.0 if x_point is None else x_point, float))
    lhs, rhs, se = [], [], []
    for i, t0 in enumerate(t_grid):
        tt = np.full(mc_n, t0)
        xx = np.tile(xv, (mc_n, 1))
        if oracle.has_h:
            if oracle.sample_h is None:
                raise OracleUnavailable("no conditional sampler for H")
            h = oracle.sample_h(t0, xv[0] if xv.size else 0.0, mc_n, CounterRng(seed + i))
        else:
            h = None
        vals = oracle.dm_dt(tt, xx, h)
        lhs.append(float(np.mean(vals)))
        se.append(float(np.std(vals, ddof=1) / math.sqrt(mc_n)) if mc_n > 1 else 0.0)
        step = 1e-4 * (1.0 + abs(t0))
        x1 = xv[None, :]
        up = oracle.m_obs(np.array([t0 + step]), x1)[0]
        dn = oracle.m_obs(np.array([t0 - step]), x1)[0]
        rhs.append(float((up - dn) / (2 * step)))
    lhs, rhs, se = map(np.array, (lhs, rhs, se))
    gaps = np.abs(lhs - rhs)
    k = int(np.argmax(gaps))
    return Prop1Result(float(gaps[k]), float(se[k]), lhs, rhs, se)


# --------------------------------------------------------------------------
# persistence


def write_dataset(ds: Dataset, spec: DgpSpec, path) -> Path:
    """Write the CSV plus a ``<path>.meta`` sidecar of ``key=value`` lines."""
    path = Path(path)
    write_csv(ds, path)
    meta = path.with_name(path.name + ".meta")
    lines = [f"scenario={spec.scenario}", f"n={spec.n}", f"seed={spec.seed}"]
    lines += [f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in spec.params]
    meta.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return meta


def read_metadata(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip() and "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def spec_from_metadata(meta: Mapping[str, str]) -> DgpSpec:
    meta = dict(meta)
    scenario = meta.pop("scenario")
    n = int(meta.pop("n"))
    seed = int(meta.pop("seed"))
    params = {}
    for k, v in meta.items():
        if v == "None":
            params[k] = None
        else:
            try:
                params[k] = int(v)
            except ValueError:
                try:
                    params[k] = float(v)
                except ValueError:
                    params[k] = v
    return DgpSpec(scenario, n, seed, tuple(params.items()))
