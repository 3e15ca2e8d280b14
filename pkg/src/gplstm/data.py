"""
Return-series ingestion, normalisation, lag windows and chronological splits,
plus a synthetic multi-stock generator.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ReturnSeries",
    "NormStats",
    "Samples",
    "DatasetSplit",
    "SyntheticSpec",
    "DataError",
    "log_return",
    "fit_normalizer",
    "build_samples",
    "split_dataset",
    "split_sizes",
    "prepare_stock",
    "simulate_synthetic",
    "ingest_csv",
    "write_csv",
]

WINDOW_LEN = 20
TEST_LEN = 300
TRAIN_FRAC = 0.7


class DataError(ValueError):
    pass


@dataclass
class ReturnSeries:
    stock_id: str
    dates: list
    returns: np.ndarray

    def __post_init__(self):
        self.returns = np.asarray(self.returns, dtype=float)
        if len(self.dates) != len(self.returns):
            raise DataError(f"{self.stock_id}: {len(self.dates)} dates vs {len(self.returns)} returns")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError(f"{self.stock_id}: dates must be strictly increasing")
        if not np.all(np.isfinite(self.returns)):
            raise DataError(f"{self.stock_id}: non-finite return")

    def __len__(self):
        return len(self.returns)


@dataclass(frozen=True)
class NormStats:
    """Affine map ``x = (r - shift) / scale``."""

    shift: float
    scale: float
    mode: str = "maxabs"

    def apply(self, r):
        return (np.asarray(r, dtype=float) - self.shift) / self.scale

    def invert(self, x):
        return np.asarray(x, dtype=float) * self.scale + self.shift

    @property
    def mean(self):
        return self.shift


def log_return(first_price, last_price):
    if not (first_price > 0 and last_price > 0):
        raise DataError(f"prices must be positive, got {first_price}, {last_price}")
    return math.log(last_price) - math.log(first_price)


def fit_normalizer(train_returns, mode="maxabs") -> NormStats:
    """Normalisation statistics from training rows only.

    ``maxabs``  (r - mean) / max|r - mean|, values in [-1, 1]
    ``literal`` (r - mean) / max(r)
    ``minmax``  (r - min) / (max - min)
    """
    r = np.asarray(train_returns, dtype=float)
    if r.size == 0:
        raise DataError("cannot normalise an empty series")
    if mode == "maxabs":
        shift = float(np.mean(r))
        scale = float(np.max(np.abs(r - shift)))
    elif mode == "literal":
        shift = float(np.mean(r))
        scale = float(np.max(r))
    elif mode == "minmax":
        shift = float(np.min(r))
        scale = float(np.max(r) - shift)
    else:
        raise DataError(f"unknown normalisation mode {mode!r}")
    if not scale > 0:
        raise DataError(f"degenerate scale {scale} for normalisation mode {mode!r}")
    return NormStats(shift, scale, mode)


@dataclass
class Samples:
    """Supervised windows for one stock.

    windows : (n, window_len, 2) array of (normalised return, sign) pairs,
              oldest step first
    labels  : (n,) normalised next-day returns
    dates   : label dates
    index   : position of each label in the source series
    """

    stock_id: str
    windows: np.ndarray
    labels: np.ndarray
    dates: list
    index: np.ndarray

    def __len__(self):
        return len(self.labels)

    def take(self, sl):
        return Samples(self.stock_id, self.windows[sl], self.labels[sl],
                       self.dates[sl], self.index[sl])


@dataclass
class DatasetSplit:
    train: Samples
    validation: Samples
    test: Samples


def build_samples(series: ReturnSeries, stats: NormStats, window_len=WINDOW_LEN) -> Samples:
    n = len(series)
    if n < window_len + 1:
        raise DataError(f"{series.stock_id}: need at least {window_len + 1} returns, got {n}")
    r = stats.apply(series.returns)
    d = np.sign(r)
    steps = np.stack([r, d], axis=1)
    idx = np.arange(window_len, n)
    windows = np.stack([steps[t - window_len:t] for t in idx])
    return Samples(series.stock_id, windows, r[idx].copy(), [series.dates[t] for t in idx], idx)


def split_sizes(n_samples, test_len=TEST_LEN, train_frac=TRAIN_FRAC):
    if n_samples <= test_len + 10:
        raise DataError(f"need more than {test_len + 10} samples, got {n_samples}")
    m = n_samples - test_len
    n_train = int(math.floor(train_frac * m + 1e-9))  # 0.7 * 700 is 489.999...
    return n_train, m - n_train, test_len


def split_dataset(samples: Samples, test_len=TEST_LEN, train_frac=TRAIN_FRAC) -> DatasetSplit:
    n_train, n_val, _ = split_sizes(len(samples), test_len, train_frac)
    return DatasetSplit(
        samples.take(slice(0, n_train)),
        samples.take(slice(n_train, n_train + n_val)),
        samples.take(slice(n_train + n_val, None)),
    )


def prepare_stock(series: ReturnSeries, window_len=WINDOW_LEN, test_len=TEST_LEN,
                  train_frac=TRAIN_FRAC, norm_mode="maxabs"):
    """Normalise on training rows, window, and split one stock.

    Training rows are every return that appears in a training window or
    label, i.e. the first ``window_len + n_train`` observations.
    """
    n_samples = len(series) - window_len
    n_train, _, _ = split_sizes(n_samples, test_len, train_frac)
    stats = fit_normalizer(series.returns[: window_len + n_train], norm_mode)
    split = split_dataset(build_samples(series, stats, window_len), test_len, train_frac)
    return stats, split


# --- synthetic data ----------------------------------------------------------

@dataclass
class SyntheticSpec:
    """Generator settings.

    mode: ``garch``, ``regime`` or ``mixed`` (alternates by stock index).
    """

    mode: str = "mixed"
    k0: float = 2e-5
    alpha1: float = 0.10
    rho1: float = 0.85
    switch_prob: float = 0.02
    calm_sd: float = 0.01
    turbulent_sd: float = 0.025
    start_date: str = "2013-01-01"
    extra: dict = field(default_factory=dict)


def _business_days(start, n):
    d = dt.date.fromisoformat(start)
    out = []
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return out


def _garch_path(rng, n, spec: SyntheticSpec, burn=200):
    h = spec.k0 / (1.0 - spec.alpha1 - spec.rho1)
    z = rng.standard_normal(n + burn)
    r = np.empty(n + burn)
    for t in range(n + burn):
        r[t] = math.sqrt(h) * z[t]
        h = spec.k0 + spec.rho1 * h + spec.alpha1 * r[t] ** 2
    return r[burn:]


def _regime_path(rng, n, spec: SyntheticSpec, burn=200):
    # Markov-switching nonlinear AR: the calm regime trends, the turbulent
    # regime mean-reverts hard on large moves, with regime-specific noise.
    total = n + burn
    z = rng.standard_normal(total)
    u = rng.uniform(size=total)
    s = 0
    r = np.zeros(total)
    for t in range(2, total):
        if u[t] < spec.switch_prob:
            s = 1 - s
        r1, r2 = r[t - 1], r[t - 2]
        if s == 0:
            mean = 0.45 * r1 + 0.25 * r2
            sd = spec.calm_sd
        else:
            x = r1 / spec.turbulent_sd
            mean = -spec.turbulent_sd * 0.9 * np.tanh(1.5 * x) + 0.3 * r2
            sd = spec.turbulent_sd
        r[t] = mean + sd * z[t]
    return r[burn:]


def simulate_synthetic(spec: SyntheticSpec | None = None, n_stocks=5, n_days=600, seed=0):
    spec = spec or SyntheticSpec()
    if n_days < 100:
        raise DataError("n_days must be >= 100")
    if spec.mode not in ("garch", "regime", "mixed"):
        raise DataError(f"unknown synthetic mode {spec.mode!r}")
    dates = _business_days(spec.start_date, n_days)
    children = np.random.SeedSequence(seed).spawn(n_stocks)
    out = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        mode = spec.mode if spec.mode != "mixed" else ("regime" if i % 2 == 0 else "garch")
        path = _regime_path(rng, n_days, spec) if mode == "regime" else _garch_path(rng, n_days, spec)
        out.append(ReturnSeries(f"SYN{i:03d}", list(dates), path))
    return out


# --- CSV ----------------------------------------------------------------------

_PRICE_HEADER = ["date", "stock_id", "first_price", "last_price"]
_RETURN_HEADER = ["date", "stock_id", "log_return"]


def ingest_csv(path):
    """Read a price or log-return CSV into per-stock series sorted by date."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        header = [h.strip() for h in header]
        if header == _PRICE_HEADER:
            kind = "price"
        elif header == _RETURN_HEADER:
            kind = "return"
        else:
            raise DataError(f"{path}: unrecognised header {header}")
        rows = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                date = dt.date.fromisoformat(row[0].strip())
                stock = row[1].strip()
                if not stock:
                    raise ValueError("empty stock_id")
                if kind == "price":
                    value = log_return(float(row[2]), float(row[3]))
                else:
                    value = float(row[2])
                if not math.isfinite(value):
                    raise ValueError("non-finite value")
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed row: {exc}") from None
            per_stock = rows.setdefault(stock, {})
            if date in per_stock:
                raise DataError(f"{path}:{lineno}: duplicate row for ({date}, {stock})")
            per_stock[date] = value
    out = []
    for stock in sorted(rows):
        items = sorted(rows[stock].items())
        out.append(ReturnSeries(stock, [d for d, _ in items], np.array([v for _, v in items])))
    return out


def write_csv(series_list, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_RETURN_HEADER)
        for s in series_list:
            for d, r in zip(s.dates, s.returns):
                w.writerow([d.isoformat(), s.stock_id, repr(float(r))])
