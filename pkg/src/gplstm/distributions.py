"""
Zero-mean, unit-variance innovation laws used by the GARCH benchmarks.

``norm``  standard normal
``std``   Student-t rescaled to unit variance (nu > 2)
``sstd``  Fernandez-Steel skewed Student-t, standardised to zero mean and
          unit variance (skew xi > 0, xi = 1 is ``std``)
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import betaln, gammaln, ndtr, stdtr

__all__ = ["DISTS", "logpdf", "pdf", "cdf", "quantile", "abs_mean", "check_params", "sstd_moments"]

DISTS = ("norm", "std", "sstd")

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def check_params(dist, nu=None, xi=None):
    if dist not in DISTS:
        raise ValueError(f"unknown distribution {dist!r}")
    if dist in ("std", "sstd") and not (nu is not None and nu > 2):
        raise ValueError(f"{dist} needs nu > 2, got {nu}")
    if dist == "sstd" and not (xi is not None and xi > 0):
        raise ValueError(f"sstd needs xi > 0, got {xi}")


def _t_unit_logpdf(z, nu):
    # t_nu scaled by sqrt((nu-2)/nu) so the variance is 1
    s2 = nu - 2.0
    return (
        gammaln((nu + 1) / 2) - gammaln(nu / 2) - 0.5 * math.log(math.pi * s2)
        - (nu + 1) / 2 * np.log1p(z * z / s2)
    )


def _t_unit_cdf(z, nu):
    return stdtr(nu, z * math.sqrt(nu / (nu - 2.0)))


def _t_unit_abs_mean(nu):
    # E|z| for the unit-variance t
    return 2.0 * math.sqrt(nu - 2.0) / ((nu - 1.0) * math.exp(betaln(0.5, nu / 2)))


def _t_unit_upper_moment(a, nu):
    # int_a^inf u f(u) du for the unit-variance t, a >= 0
    s = math.sqrt((nu - 2.0) / nu)
    w = np.asarray(a, dtype=float) / s
    log_fnu = (
        gammaln((nu + 1) / 2) - gammaln(nu / 2) - 0.5 * math.log(nu * math.pi)
        - (nu + 1) / 2 * np.log1p(w * w / nu)
    )
    return s * (nu + w * w) / (nu - 1.0) * np.exp(log_fnu)


def sstd_moments(nu, xi):
    """Mean and std of the unstandardised Fernandez-Steel variable."""
    m1 = _t_unit_abs_mean(nu)
    mu = m1 * (xi - 1.0 / xi)
    sigma = math.sqrt((1.0 - m1 * m1) * (xi * xi + 1.0 / (xi * xi)) + 2.0 * m1 * m1 - 1.0)
    return mu, sigma


def _fs_cdf(z, nu, xi):
    # CDF of the unstandardised skew variable with density g f(z / xi^sign z)
    g = 2.0 / (xi + 1.0 / xi)
    z = np.asarray(z, dtype=float)
    lower = (g / xi) * _t_unit_cdf(z * xi, nu)
    upper = g / (2.0 * xi) + g * xi * (_t_unit_cdf(z / xi, nu) - 0.5)
    return np.where(z < 0, lower, upper)


def logpdf(x, dist="norm", nu=None, xi=None):
    check_params(dist, nu, xi)
    x = np.asarray(x, dtype=float)
    if dist == "norm":
        return -_LOG_SQRT_2PI - 0.5 * x * x
    if dist == "std":
        return _t_unit_logpdf(x, nu)
    if dist == "sstd":
        mu, sigma = sstd_moments(nu, xi)
        z = x * sigma + mu
        scale = np.where(z < 0, 1.0 / xi, xi)
        g = 2.0 / (xi + 1.0 / xi)
        return math.log(g) + _t_unit_logpdf(z / scale, nu) + math.log(sigma)
    raise ValueError(f"unknown distribution {dist!r}")


def pdf(x, dist="norm", nu=None, xi=None):
    return np.exp(logpdf(x, dist, nu, xi))


def cdf(x, dist="norm", nu=None, xi=None):
    check_params(dist, nu, xi)
    x = np.asarray(x, dtype=float)
    if dist == "norm":
        return ndtr(x)
    if dist == "std":
        return _t_unit_cdf(x, nu)
    if dist == "sstd":
        mu, sigma = sstd_moments(nu, xi)
        return _fs_cdf(x * sigma + mu, nu, xi)
    raise ValueError(f"unknown distribution {dist!r}")


def quantile(alpha, dist="norm", nu=None, xi=None, tol=1e-10):
    """Alpha-quantile by bisection on the CDF."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    check_params(dist, nu, xi)
    lo, hi = -1.0, 1.0
    while cdf(lo, dist, nu, xi) > alpha:
        lo *= 2.0
    while cdf(hi, dist, nu, xi) < alpha:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cdf(mid, dist, nu, xi) < alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def abs_mean(dist="norm", nu=None, xi=None):
    """E|v| for the standardised innovation (needed by EGARCH)."""
    if dist == "norm":
        return math.sqrt(2.0 / math.pi)
    if dist == "std":
        return _t_unit_abs_mean(nu)
    if dist == "sstd":
        # E|z - mu| = 2 * (mu F(mu) - int_{-inf}^{mu} z f(z) dz)
        mu, sigma = sstd_moments(nu, xi)
        g = 2.0 / (xi + 1.0 / xi)
        t0 = float(_t_unit_upper_moment(0.0, nu))
        if mu <= 0:
            partial = -(g / xi ** 2) * float(_t_unit_upper_moment(-mu * xi, nu))
        else:
            partial = -(g / xi ** 2) * t0 + g * xi ** 2 * (t0 - float(_t_unit_upper_moment(mu / xi, nu)))
        f_mu = float(_fs_cdf(mu, nu, xi))
        return 2.0 * (mu * f_mu - partial) / sigma
    raise ValueError(f"unknown distribution {dist!r}")
