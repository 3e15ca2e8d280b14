"""
Sharpe-ranked long-short portfolios and their backtest statistics.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Forecast",
    "DailyPortfolio",
    "BacktestResult",
    "conditional_sharpe",
    "select_portfolio",
    "portfolio_daily_return",
    "backtest_stats",
    "run_backtest",
    "sub_period_report",
    "VAR_LEVELS",
]

VAR_LEVELS = (0.05, 0.075, 0.10)


@dataclass(frozen=True)
class Forecast:
    """One-day-ahead predictive mean and volatility in raw log-return units."""

    stock_id: str
    date: object
    mu: float
    sigma: float
    model_id: str = ""
    dist: str = "norm"
    nu: float | None = None
    xi: float | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"{self.model_id}/{self.stock_id}/{self.date}: sigma must be > 0")


@dataclass
class DailyPortfolio:
    date: object
    long: list
    short: list
    realized_return: float
    long_return: float = math.nan   # mean realized return of the long names
    short_return: float = math.nan  # mean realized return of the shorted names


@dataclass
class BacktestResult:
    daily_returns: np.ndarray
    mean: float
    std: float
    sharpe: float
    var: dict
    median: float
    long_mean: float = math.nan
    short_mean: float = math.nan
    zero_std: bool = False
    n_days: int = 0
    flags: list = field(default_factory=list)

    def summary(self):
        out = {
            "avg_daily_return": self.mean,
            "std_dev": self.std,
            "sharpe": self.sharpe,
            "median": self.median,
            "long_mean": self.long_mean,
            "short_mean": self.short_mean,
            "n_days": self.n_days,
        }
        for level, v in self.var.items():
            out[f"var_{level:g}"] = v
        return out


def conditional_sharpe(mu, sigma, risk_free=0.0):
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return (mu - risk_free) / sigma


def select_portfolio(day_forecasts, k, risk_free=0.0):
    """Top-k and bottom-k stocks by conditional Sharpe ratio.

    Ties are broken by stock_id ascending, so among equal Sharpe ratios the
    smallest ids go long and the largest go short.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if 2 * k > len(day_forecasts):
        raise ValueError(f"2k = {2 * k} exceeds the {len(day_forecasts)} stocks available")
    ranked = sorted(
        day_forecasts,
        key=lambda f: (-conditional_sharpe(f.mu, f.sigma, risk_free), f.stock_id),
    )
    return [f.stock_id for f in ranked[:k]], [f.stock_id for f in ranked[-k:]]


def portfolio_daily_return(long_returns, short_returns):
    """Equal-weight return of 2k positions; the short leg earns -r."""
    long_returns = np.asarray(long_returns, dtype=float)
    short_returns = np.asarray(short_returns, dtype=float)
    if long_returns.shape != short_returns.shape or long_returns.size == 0:
        raise ValueError("long and short legs need the same non-zero length")
    k = long_returns.size
    return float((long_returns.sum() - short_returns.sum()) / (2 * k))


def backtest_stats(daily_returns, risk_free=0.0, long_returns=None, short_returns=None,
                   var_levels=VAR_LEVELS):
    """Summary statistics of a daily portfolio return series.

    The standard deviation is the sample (n - 1) one; VaR levels are
    linearly interpolated empirical quantiles. A zero standard deviation
    reports a Sharpe ratio of 0 and sets ``zero_std``.
    """
    x = np.asarray(daily_returns, dtype=float)
    if x.size == 0:
        raise ValueError("empty return series")
    mean = float(np.mean(x))
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    zero = not std > 0
    sharpe = 0.0 if zero else (mean - risk_free) / std
    var = {lvl: float(np.quantile(x, lvl)) for lvl in var_levels}
    res = BacktestResult(x, mean, std, sharpe, var, float(np.median(x)), zero_std=zero, n_days=x.size)
    if long_returns is not None:
        res.long_mean = float(np.mean(long_returns))
    if short_returns is not None:
        res.short_mean = float(np.mean(short_returns))
    if zero:
        res.flags.append("zero_std")
    return res


def run_backtest(forecasts, realized, k, risk_free=0.0):
    """Daily top-k/flop-k backtest.

    `realized` maps ``(stock_id, date)`` to the realised return of that day.
    Only forecasts dated the same day enter that day's ranking.
    """
    by_day = defaultdict(list)
    for f in forecasts:
        by_day[f.date].append(f)
    days = []
    for date in sorted(by_day):
        longs, shorts = select_portfolio(by_day[date], k, risk_free)
        lr = [realized[(s, date)] for s in longs]
        sr = [realized[(s, date)] for s in shorts]
        days.append(DailyPortfolio(date, longs, shorts, portfolio_daily_return(lr, sr),
                                   float(np.mean(lr)), float(np.mean(sr))))
    rets = [d.realized_return for d in days]
    stats = backtest_stats(rets, risk_free, [d.long_return for d in days],
                           [d.short_return for d in days])
    return days, stats


def sub_period_report(daily_returns, risk_free=0.0, long_returns=None, short_returns=None):
    """Backtest statistics on the two chronological halves.

    With an odd length the first half takes the extra day and both results
    carry an ``odd_length`` flag.
    """
    x = np.asarray(daily_returns, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two days to split")
    cut = (x.size + 1) // 2

    def half(sl):
        lr = None if long_returns is None else np.asarray(long_returns)[sl]
        sr = None if short_returns is None else np.asarray(short_returns)[sl]
        return backtest_stats(x[sl], risk_free, lr, sr)

    first, second = half(slice(0, cut)), half(slice(cut, None))
    if x.size % 2:
        first.flags.append("odd_length")
        second.flags.append("odd_length")
    return first, second
