"""
GARCH(1,1), EGARCH(1,1) and GJR-GARCH(1,1) with a constant mean, fit by
maximum likelihood under normal, Student-t or skewed-t innovations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.optimize import minimize

from . import distributions as dists

__all__ = [
    "FAMILIES",
    "MODEL_IDS",
    "GarchSpec",
    "GarchParams",
    "GarchFit",
    "VarianceUnderflowError",
    "EstimationError",
    "parse_model_id",
    "variance_filter",
    "log_likelihood",
    "fit_mle",
    "forecast_one_step",
    "innovation_quantile",
    "simulate",
]

FAMILIES = ("sgarch", "egarch", "gjr")
_FAMILY_LABEL = {"sgarch": "sgarch", "egarch": "egarch", "gjr": "gjr-garch"}
MODEL_IDS = tuple(f"{_FAMILY_LABEL[f]}-{d}" for f in FAMILIES for d in dists.DISTS)

_VOL_NAMES = {
    "sgarch": ("k0", "alpha1", "rho1"),
    "egarch": ("alpha0", "alpha1", "gamma1", "beta1"),
    "gjr": ("k0", "alpha1", "rho1", "gamma"),
}
_DIST_NAMES = {"norm": (), "std": ("nu",), "sstd": ("nu", "xi")}


class VarianceUnderflowError(ArithmeticError):
    pass


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GarchSpec:
    family: str = "sgarch"
    dist: str = "norm"
    p: int = 1
    q: int = 1
    egarch_gamma_sign: float = 1.0  # -1 gives the "- gamma (|v| - E|v|)" form

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown GARCH family {self.family!r}")
        if self.dist not in dists.DISTS:
            raise ValueError(f"unknown innovation distribution {self.dist!r}")
        if (self.p, self.q) != (1, 1):
            raise ValueError("only p = q = 1 is supported")

    @property
    def model_id(self):
        return f"{_FAMILY_LABEL[self.family]}-{self.dist}"

    @property
    def param_names(self):
        return ("mu",) + _VOL_NAMES[self.family] + _DIST_NAMES[self.dist]


def parse_model_id(model_id: str) -> GarchSpec:
    mid = model_id.lower()
    for fam, label in _FAMILY_LABEL.items():
        for d in dists.DISTS:
            if mid == f"{label}-{d}":
                return GarchSpec(fam, d)
    raise ValueError(f"unknown GARCH model id {model_id!r}; expected one of {MODEL_IDS}")


@dataclass
class GarchParams:
    mu: float = 0.0
    k0: float = 0.0
    alpha0: float = 0.0
    alpha1: float = 0.0
    rho1: float = 0.0
    gamma: float = 0.0
    gamma1: float = 0.0
    beta1: float = 0.0
    nu: float | None = None
    xi: float | None = None

    def feasible(self, spec: GarchSpec) -> bool:
        vals = [getattr(self, n) for n in spec.param_names]
        if any(v is None or not math.isfinite(v) for v in vals):
            return False
        if spec.family == "egarch":
            ok = abs(self.beta1) < 1
        else:
            persist = self.alpha1 + self.rho1 + (self.gamma / 2 if spec.family == "gjr" else 0.0)
            ok = self.k0 > 0 and self.alpha1 >= 0 and self.rho1 >= 0 and persist < 1
            if spec.family == "gjr":
                ok = ok and self.alpha1 + self.gamma >= 0
        if spec.dist in ("std", "sstd"):
            ok = ok and self.nu > 2
        if spec.dist == "sstd":
            ok = ok and self.xi > 0
        return bool(ok)

    def to_dict(self, spec: GarchSpec):
        return {n: float(getattr(self, n)) for n in spec.param_names}


@dataclass
class GarchFit:
    spec: GarchSpec
    params: GarchParams
    variances: np.ndarray
    loglik: float
    converged: bool
    h0: float
    n_obs: int = 0
    extra: dict = field(default_factory=dict)


@numba.njit(cache=True)
def _filter_quadratic(eps, h0, k0, alpha1, rho1, gamma):
    n = eps.shape[0]
    h = np.empty(n + 1)
    h[0] = h0
    for t in range(1, n + 1):
        e = eps[t - 1]
        e2 = e * e
        ht = k0 + rho1 * h[t - 1] + alpha1 * e2
        if e < 0.0:
            ht += gamma * e2
        if not ht > 0.0:
            return h, t
        h[t] = ht
    return h, -1


@numba.njit(cache=True)
def _filter_egarch(eps, h0, alpha0, alpha1, gamma1, beta1, e_abs):
    n = eps.shape[0]
    h = np.empty(n + 1)
    h[0] = h0
    lh = math.log(h0)
    for t in range(1, n + 1):
        v = eps[t - 1] / math.sqrt(h[t - 1])
        lh = alpha0 + alpha1 * v + gamma1 * (abs(v) - e_abs) + beta1 * lh
        if lh > 700.0:
            return h, t
        ht = math.exp(lh)
        if not ht > 0.0:
            return h, t
        h[t] = ht
    return h, -1


def _filter(spec, params, eps, h0):
    if spec.family == "egarch":
        e_abs = dists.abs_mean(spec.dist, params.nu, params.xi)
        return _filter_egarch(
            eps, h0, params.alpha0, params.alpha1,
            spec.egarch_gamma_sign * params.gamma1, params.beta1, e_abs,
        )
    gamma = params.gamma if spec.family == "gjr" else 0.0
    return _filter_quadratic(eps, h0, params.k0, params.alpha1, params.rho1, gamma)


def variance_filter(spec: GarchSpec, params: GarchParams, returns, h0=None, extend=False):
    """Conditional variances h_t for every observation.

    ``h_0`` defaults to the sample variance of the residuals. With
    ``extend=True`` the one-step-ahead variance is appended.
    """
    r = np.asarray(returns, dtype=float)
    if r.ndim != 1 or len(r) < 2:
        raise ValueError("need at least two returns")
    eps = r - params.mu
    if h0 is None:
        h0 = float(np.var(eps))
    if not h0 > 0:
        raise VarianceUnderflowError("variance underflow at index 0")
    h, bad = _filter(spec, params, eps, float(h0))
    if bad >= 0:
        raise VarianceUnderflowError(f"variance underflow at index {bad}")
    return h if extend else h[:-1]


def log_likelihood(spec: GarchSpec, params: GarchParams, returns, h0=None) -> float:
    """Gaussian-quasi or full log-likelihood; -inf off the feasible set."""
    if not params.feasible(spec):
        return -np.inf
    try:
        h = variance_filter(spec, params, returns, h0=h0)
    except VarianceUnderflowError:
        return -np.inf
    eps = np.asarray(returns, dtype=float) - params.mu
    sd = np.sqrt(h)
    ll = float(np.sum(dists.logpdf(eps / sd, spec.dist, params.nu, params.xi) - np.log(sd)))
    return ll if math.isfinite(ll) else -np.inf


# --- unconstrained parameterisation ---------------------------------------

def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x)) if x > -700 else 0.0


def _logit(p):
    p = min(max(p, 1e-12), 1 - 1e-12)
    return math.log(p / (1.0 - p))


def _unpack(spec: GarchSpec, theta, scale):
    p = GarchParams(mu=theta[0] * math.sqrt(scale))
    i = 1
    if spec.family == "sgarch":
        p.k0 = math.exp(theta[1]) * scale
        persist = _sigmoid(theta[2])
        share = _sigmoid(theta[3])
        p.alpha1, p.rho1 = persist * share, persist * (1.0 - share)
        i = 4
    elif spec.family == "gjr":
        p.k0 = math.exp(theta[1]) * scale
        persist = _sigmoid(theta[2])
        w = np.exp(np.array([0.0, theta[3], theta[4]]) - max(0.0, theta[3], theta[4]))
        w /= w.sum()
        p.alpha1, p.rho1, p.gamma = persist * w[0], persist * w[1], 2.0 * persist * w[2]
        i = 5
    else:
        p.alpha0, p.alpha1, p.gamma1 = theta[1], theta[2], theta[3]
        p.beta1 = math.tanh(theta[4])
        i = 5
    if spec.dist in ("std", "sstd"):
        p.nu = 2.0 + math.exp(min(theta[i], 50.0))
        i += 1
    if spec.dist == "sstd":
        p.xi = math.exp(theta[i])
    return p


def _pack(spec: GarchSpec, p: GarchParams, scale):
    th = [p.mu / math.sqrt(scale)]
    if spec.family == "sgarch":
        persist = p.alpha1 + p.rho1
        th += [math.log(p.k0 / scale), _logit(persist), _logit(p.alpha1 / persist if persist > 0 else 0.5)]
    elif spec.family == "gjr":
        g2 = p.gamma / 2.0
        persist = p.alpha1 + p.rho1 + g2
        parts = np.maximum(np.array([p.alpha1, p.rho1, g2]), 1e-8)
        th += [math.log(p.k0 / scale), _logit(persist),
               math.log(parts[1] / parts[0]), math.log(parts[2] / parts[0])]
    else:
        b = min(max(p.beta1, -1 + 1e-12), 1 - 1e-12)
        th += [p.alpha0, p.alpha1, p.gamma1, math.atanh(b)]
    if spec.dist in ("std", "sstd"):
        th.append(math.log(p.nu - 2.0))
    if spec.dist == "sstd":
        th.append(math.log(p.xi))
    return np.array(th, dtype=float)


def _initial_guess(spec: GarchSpec, r):
    var = float(np.var(r))
    p = GarchParams(mu=float(np.mean(r)))
    if spec.family == "sgarch":
        p.alpha1, p.rho1 = 0.08, 0.85
        p.k0 = var * (1 - 0.93)
    elif spec.family == "gjr":
        p.alpha1, p.rho1, p.gamma = 0.05, 0.85, 0.06
        p.k0 = var * (1 - 0.93)
    else:
        p.beta1, p.alpha1, p.gamma1 = 0.9, 0.0, 0.1
        p.alpha0 = (1 - 0.9) * math.log(var)
    if spec.dist in ("std", "sstd"):
        p.nu = 8.0
    if spec.dist == "sstd":
        p.xi = 1.0
    return p


def fit_mle(spec: GarchSpec, returns, n_starts=5, seed=0, maxiter=None) -> GarchFit:
    """Maximum-likelihood fit by Nelder-Mead from `n_starts` starting points.

    The first start is a fixed heuristic; the rest perturb it with a seeded
    RNG. The best optimum is polished by one more simplex run.
    """
    r = np.asarray(returns, dtype=float)
    if r.ndim != 1 or len(r) < 50:
        raise ValueError(f"need at least 50 returns to fit {spec.model_id}, got {len(r)}")
    if not np.all(np.isfinite(r)):
        raise ValueError("returns contain non-finite values")
    scale = float(np.var(r))
    if not scale > 0:
        raise ValueError("returns have zero variance")
    h0 = scale
    rng = np.random.default_rng(seed)

    def objective(theta):
        try:
            p = _unpack(spec, theta, scale)
        except (OverflowError, ValueError):
            return 1e300
        ll = log_likelihood(spec, p, r, h0=h0)
        return -ll if math.isfinite(ll) else 1e300

    theta0 = _pack(spec, _initial_guess(spec, r), scale)
    dim = len(theta0)
    opts = {"maxiter": maxiter or 400 * dim, "maxfev": maxiter or 400 * dim,
            "xatol": 1e-7, "fatol": 1e-9, "adaptive": True}
    best = None
    for k in range(n_starts):
        start = theta0 if k == 0 else theta0 + rng.normal(0.0, 0.5, size=dim)
        res = minimize(objective, start, method="Nelder-Mead", options=opts)
        if np.isfinite(res.fun) and res.fun < 1e299 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise EstimationError(f"estimation failed for {spec.model_id}: all starts non-finite")
    polished = minimize(objective, best.x, method="Nelder-Mead", options=opts)
    if polished.fun <= best.fun:
        best = polished
    params = _unpack(spec, best.x, scale)
    h = variance_filter(spec, params, r, h0=h0)
    return GarchFit(spec, params, h, -float(best.fun), bool(best.success), h0, len(r))


def forecast_one_step(fit: GarchFit, returns):
    """Constant mean and sqrt of the next-step variance given `returns`."""
    h = variance_filter(fit.spec, fit.params, returns, h0=fit.h0, extend=True)
    return fit.params.mu, math.sqrt(h[-1])


def innovation_quantile(dist, dist_params=None, alpha=0.05):
    dist_params = dist_params or {}
    return dists.quantile(alpha, dist, dist_params.get("nu"), dist_params.get("xi"))


def _draw_innovations(rng, n, dist, nu=None, xi=None):
    if dist == "norm":
        return rng.standard_normal(n)
    if dist == "std":
        return rng.standard_t(nu, n) * math.sqrt((nu - 2) / nu)
    # Fernandez-Steel: |t| stretched by xi on the right, shrunk on the left
    w = np.abs(rng.standard_t(nu, n)) * math.sqrt((nu - 2) / nu)
    right = rng.uniform(size=n) < xi * xi / (1.0 + xi * xi)
    z = np.where(right, xi * w, -w / xi)
    m, s = dists.sstd_moments(nu, xi)
    return (z - m) / s


def simulate(spec: GarchSpec, params: GarchParams, n, seed=0, burn=500):
    """Simulate a return path of length n from the given model."""
    rng = np.random.default_rng(seed)
    v = _draw_innovations(rng, n + burn, spec.dist, params.nu, params.xi)
    r = np.empty(n + burn)
    if spec.family == "egarch":
        e_abs = dists.abs_mean(spec.dist, params.nu, params.xi)
        lh = params.alpha0 / (1.0 - params.beta1)
        g1 = spec.egarch_gamma_sign * params.gamma1
        for t in range(n + burn):
            r[t] = params.mu + math.exp(0.5 * lh) * v[t]
            lh = params.alpha0 + params.alpha1 * v[t] + g1 * (abs(v[t]) - e_abs) + params.beta1 * lh
    else:
        gamma = params.gamma if spec.family == "gjr" else 0.0
        persist = params.alpha1 + params.rho1 + gamma / 2
        h = params.k0 / (1.0 - persist)
        for t in range(n + burn):
            e = math.sqrt(h) * v[t]
            r[t] = params.mu + e
            h = params.k0 + params.rho1 * h + params.alpha1 * e * e + (gamma * e * e if e < 0 else 0.0)
    return r[burn:]
