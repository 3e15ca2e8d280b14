"""
Forecast-quality metrics: MSE, directional accuracy, VaR series and the
Kupiec failure-rate test, occupying-stock counts, and acf/pacf diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from . import distributions as dists

__all__ = [
    "KupiecResult",
    "mse_and_accuracy",
    "var_forecast_series",
    "kupiec_lr",
    "kupiec_test",
    "chi2_1_sf",
    "competition_rank",
    "occupying_ranking",
    "acf_pacf",
    "averaged_diagnostics",
]


def mse_and_accuracy(forecast, realized, zero_is_correct=False):
    """Mean squared error and the fraction of days with the right sign.

    By default a day where either value is exactly zero counts as wrong.
    """
    f = np.asarray(forecast, dtype=float)
    r = np.asarray(realized, dtype=float)
    if f.shape != r.shape or f.size == 0:
        raise ValueError("forecast and realized need equal non-zero lengths")
    mse = float(np.mean((f - r) ** 2))
    prod = f * r
    hits = prod >= 0 if zero_is_correct else prod > 0
    return mse, float(np.mean(hits))


def var_forecast_series(mu, sigma, alpha, dist="norm", dist_params=None):
    """VaR_i = mu_i + q_alpha * sigma_i with q from the innovation law."""
    dist_params = dist_params or {}
    q = dists.quantile(alpha, dist, dist_params.get("nu"), dist_params.get("xi"))
    return np.asarray(mu, dtype=float) + q * np.asarray(sigma, dtype=float)


def chi2_1_sf(lr):
    """Upper tail of chi-square(1): erfc(sqrt(lr / 2))."""
    return math.erfc(math.sqrt(max(lr, 0.0) / 2.0))


def kupiec_lr(n, N, alpha):
    """Kupiec likelihood ratio with the 0 * ln 0 = 0 convention."""
    if N < 1 or not 0 <= n <= N:
        raise ValueError(f"need 0 <= n <= N and N >= 1, got n={n}, N={N}")
    p_hat = n / N
    ll_hat = xlogy(n, p_hat) + xlogy(N - n, 1.0 - p_hat)
    ll_0 = xlogy(n, alpha) + xlogy(N - n, 1.0 - alpha)
    return max(float(2.0 * (ll_hat - ll_0)), 0.0)


@dataclass(frozen=True)
class KupiecResult:
    n_hits: int
    n_obs: int
    lr: float
    p_value: float


def kupiec_test(realized, var_series, alpha):
    r = np.asarray(realized, dtype=float)
    v = np.asarray(var_series, dtype=float)
    if r.shape != v.shape or r.size < 1:
        raise ValueError("realized and VaR series need equal non-zero lengths")
    n = int(np.sum(r <= v))
    lr = kupiec_lr(n, r.size, alpha)
    return KupiecResult(n, int(r.size), lr, chi2_1_sf(lr))


def competition_rank(values, higher_is_better=False):
    """Standard competition ranking (1, 1, 3): ties share the better rank."""
    v = np.asarray(values, dtype=float)
    key = -v if higher_is_better else v
    return [int(np.sum(key < key[i])) + 1 for i in range(len(v))]


def occupying_ranking(values, higher_is_better=False):
    """Count, per model, the stocks on which it attains the best value.

    `values` is a (n_models, n_stocks) array. Ties award every tied model.
    Returns ``(counts, ranks)`` with ranks by count, most first.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 2 or v.size == 0:
        raise ValueError("values must be a non-empty models x stocks matrix")
    if not np.all(np.isfinite(v)):
        raise ValueError("missing or non-finite cells in the models x stocks matrix")
    best = v.max(axis=0) if higher_is_better else v.min(axis=0)
    counts = (v == best[None, :]).sum(axis=1).astype(int)
    return counts.tolist(), competition_rank(counts, higher_is_better=True)


def acf_pacf(series, max_lag=20):
    """Sample acf (lags 0..max_lag) and pacf (lags 1..max_lag).

    The acf uses the biased autocovariance (divide by n); the pacf comes
    from the Durbin-Levinson recursion on that acf.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n <= max_lag + 1:
        raise ValueError(f"series length {n} must exceed max_lag + 1 = {max_lag + 1}")
    x = x - x.mean()
    gamma0 = float(x @ x) / n
    if not gamma0 > 0:
        raise ValueError("zero-variance series")
    acf = np.array([1.0] + [float(x[k:] @ x[:-k]) / n / gamma0 for k in range(1, max_lag + 1)])
    pacf = np.zeros(max_lag)
    phi = np.zeros(max_lag + 1)
    v = 1.0
    for k in range(1, max_lag + 1):
        a = (acf[k] - phi[1:k] @ acf[k - 1:0:-1]) / v
        new = phi.copy()
        new[k] = a
        new[1:k] = phi[1:k] - a * phi[k - 1:0:-1]
        phi = new
        v *= 1.0 - a * a
        pacf[k - 1] = a
    return acf, pacf


def averaged_diagnostics(series_list, n_periods=2, max_lag=20):
    """Per sub-period mean acf and pacf across stocks.

    Each series is cut into `n_periods` contiguous chunks (earlier chunks
    take any remainder). Returns a list of ``(mean_acf, mean_pacf)``.
    """
    if not series_list:
        raise ValueError("need at least one series")
    out = []
    chunks = [np.array_split(np.asarray(s, dtype=float), n_periods) for s in series_list]
    for p in range(n_periods):
        per = [acf_pacf(c[p], max_lag) for c in chunks]
        out.append((np.mean([a for a, _ in per], axis=0), np.mean([b for _, b in per], axis=0)))
    return out
