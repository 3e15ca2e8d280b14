"""
End-to-end orchestration: data -> per-stock model fits -> rolling one-step
forecasts -> long-short backtests -> evaluation tables.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources

import numpy as np

from . import garch
from .data import (
    DataError,
    SyntheticSpec,
    ingest_csv,
    prepare_stock,
    simulate_synthetic,
)
from .evaluation import (
    averaged_diagnostics,
    competition_rank,
    kupiec_test,
    mse_and_accuracy,
    occupying_ranking,
    var_forecast_series,
)
from .strategy import Forecast, run_backtest, sub_period_report
from .training import DeepGpModel, GridSpec, TrainConfig, fit_deep_gp

__all__ = [
    "GP_LSTM",
    "MODEL_IDS",
    "ConfigError",
    "SyntheticConfig",
    "RunConfig",
    "ForecastSet",
    "ReportBundle",
    "bundled_dataset_path",
    "load_series",
    "produce_forecasts",
    "backtest_tables",
    "evaluation_tables",
    "forecast_rows",
    "run_pipeline",
]

log = logging.getLogger(__name__)

GP_LSTM = "gp_lstm"
MODEL_IDS = (GP_LSTM,) + garch.MODEL_IDS


class ConfigError(ValueError):
    pass


def bundled_dataset_path():
    """Path of the packaged 5-stock synthetic dataset (600 days, seed 0)."""
    return str(resources.files("gplstm").joinpath("datasets/synthetic_5.csv"))


@dataclass
class SyntheticConfig:
    n_stocks: int = 5
    n_days: int = 600
    seed: int = 0
    mode: str = "mixed"


@dataclass
class RunConfig:
    csv: str | None = None
    synthetic: SyntheticConfig | None = None
    models: list = field(default_factory=lambda: [GP_LSTM, "sgarch-norm"])
    grid: GridSpec = field(default_factory=GridSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    portfolio_ks: list = field(default_factory=lambda: [3, 10, 15])
    var_alphas: list = field(default_factory=lambda: [0.05, 0.075, 0.10])
    test_len: int = 300
    train_frac: float = 0.7
    window_len: int = 20
    norm_mode: str = "maxabs"
    risk_free: float = 0.0
    output_dir: str = "report"
    seed: int = 0
    workers: int = 1
    refit_every: int = 0
    garch_restarts: int = 5
    debug: bool = False

    def validate(self):
        if not self.models:
            raise ConfigError("model list is empty")
        bad = [m for m in self.models if m not in MODEL_IDS]
        if bad:
            raise ConfigError(f"unknown model ids {bad}; choose from {list(MODEL_IDS)}")
        if len(set(self.models)) != len(self.models):
            raise ConfigError("duplicate model ids")
        if not self.portfolio_ks or any(int(k) != k or k < 1 for k in self.portfolio_ks):
            raise ConfigError("portfolio_ks must be integers >= 1")
        if not self.var_alphas or any(not 0 < a < 1 for a in self.var_alphas):
            raise ConfigError("var_alphas must lie in (0, 1)")
        if self.test_len < 2:
            raise ConfigError("test_len must be >= 2")
        if not 0 < self.train_frac < 1:
            raise ConfigError("train_frac must lie in (0, 1)")
        if self.refit_every < 0 or self.workers < 1:
            raise ConfigError("refit_every must be >= 0 and workers >= 1")
        if self.norm_mode not in ("maxabs", "literal", "minmax"):
            raise ConfigError(f"unknown norm_mode {self.norm_mode!r}")
        return self

    def to_dict(self):
        """Settings that determine results; output location and worker count do not."""
        d = asdict(self)
        d.pop("output_dir")
        d.pop("workers")
        return d

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw or {})
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known - {"data"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        data = raw.pop("data", None) or {}
        if "csv" in data:
            raw.setdefault("csv", data["csv"])
        if "synthetic" in data:
            raw.setdefault("synthetic", data["synthetic"])
        try:
            if isinstance(raw.get("synthetic"), dict):
                raw["synthetic"] = SyntheticConfig(**raw["synthetic"])
            if isinstance(raw.get("grid"), dict):
                raw["grid"] = GridSpec(**raw["grid"])
            if isinstance(raw.get("train"), dict):
                raw["train"] = TrainConfig(**raw["train"])
            cfg = cls(**raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None
        return cfg

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def load_series(config: RunConfig):
    if config.csv:
        path = bundled_dataset_path() if config.csv == "bundled" else config.csv
        return ingest_csv(path)
    syn = config.synthetic or SyntheticConfig(seed=config.seed)
    return simulate_synthetic(SyntheticSpec(mode=syn.mode), syn.n_stocks, syn.n_days, syn.seed)


# --- per (stock, model) work -------------------------------------------------

def _audit_no_lookahead(split, used_label_index, forecast_index):
    """Debug check: no label used for fitting is dated at or after a forecast."""
    used = np.asarray(used_label_index)
    if used.size and np.asarray(forecast_index).size and used.max() >= np.min(forecast_index):
        raise AssertionError(
            f"lookahead: label index {used.max()} used for forecast index {np.min(forecast_index)}"
        )
    if split.train.index.max() >= split.test.index.min():
        raise AssertionError("train labels overlap the test period")


def _gp_forecasts(series, stats, split, config: RunConfig):
    cfg = replace(config.train, rng_seed=config.seed)
    model, info = fit_deep_gp(split.train, split.validation, config.grid, cfg, scale=stats.scale)
    test = split.test
    if config.refit_every:
        # re-condition (not re-train) on every sample labelled before each block
        means, variances = [], []
        for start in range(0, len(test), config.refit_every):
            block = test.take(slice(start, start + config.refit_every))
            w = np.concatenate([split.train.windows, split.validation.windows, test.windows[:start]])
            y = np.concatenate([split.train.labels, split.validation.labels, test.labels[:start]])
            if config.debug:
                _audit_no_lookahead(split, test.index[:start], block.index)
            m = DeepGpModel(model.lstm, model.rbf, w, y, model.scale)
            mu, v = m.predict(block.windows, include_noise=True)
            means.append(mu)
            variances.append(v)
        mean, var = np.concatenate(means), np.concatenate(variances)
    else:
        mean, var = model.predict(test.windows, include_noise=True)
    mu = stats.invert(mean)
    sigma = np.sqrt(var) * stats.scale
    diag = {
        "length_scale": model.rbf.length_scale,
        "signal_var": model.rbf.signal_var,
        "noise_var": model.rbf.noise_var,
        "best_epoch": model.best_epoch,
        "initial_length_scale": info["initial_hp"].length_scale,
        "initial_signal_var": info["initial_hp"].signal_var,
        "initial_noise_var": info["initial_hp"].noise_var,
        "epochs_run": len(info["history"]),
    }
    fc = [
        Forecast(series.stock_id, d, float(m), float(s), GP_LSTM)
        for d, m, s in zip(test.dates, mu, sigma)
    ]
    return fc, diag


def _garch_forecasts(series, split, model_id, config: RunConfig):
    spec = garch.parse_model_id(model_id)
    r = series.returns
    test_idx = split.test.index
    est_end = int(test_idx[0])
    if config.debug:
        _audit_no_lookahead(split, np.arange(est_end), test_idx)
    fit =garch.fit_mle(spec, r[:est_end], n_starts=config.garch_restarts, seed=config.seed)
    if config.refit_every:
        mus, sds = [], []
        for start in range(0, len(test_idx), config.refit_every):
            t0 = int(test_idx[start])
            if start:
                fit = garch.fit_mle(spec, r[:t0], n_starts=config.garch_restarts, seed=config.seed)
            stop = min(start + config.refit_every, len(test_idx))
            h = garch.variance_filter(spec, fit.params, r[: int(test_idx[stop - 1]) + 1], h0=fit.h0)
            for t in test_idx[start:stop]:
                mus.append(fit.params.mu)
                sds.append(math.sqrt(h[int(t)]))
    else:
        h = garch.variance_filter(spec, fit.params, r, h0=fit.h0)
        mus = [fit.params.mu] * len(test_idx)
        sds = [math.sqrt(h[int(t)]) for t in test_idx]
    p = fit.params
    fc = [
        Forecast(series.stock_id, d, float(m), float(s), model_id, spec.dist, p.nu, p.xi)
        for d, m, s in zip(split.test.dates, mus, sds)
    ]
    diag = dict(fit.params.to_dict(spec), loglik=fit.loglik, converged=fit.converged)
    return fc, diag


def _run_task(args):
    series, model_id, config = args
    try:
        stats, split = prepare_stock(series, config.window_len, config.test_len,
                                     config.train_frac, config.norm_mode)
        if model_id == GP_LSTM:
            fc, diag = _gp_forecasts(series, stats, split, config)
        else:
            fc, diag = _garch_forecasts(series, split, model_id, config)
        return series.stock_id, model_id, fc, diag, None
    except Exception as exc:  # reported with context, stock dropped
        return series.stock_id, model_id, None, None, f"{type(exc).__name__}: {exc}"


@dataclass
class ForecastSet:
    """Forecasts for every (model, stock, test day) and the realised returns."""

    models: list
    stocks: list
    forecasts: dict          # model_id -> list[Forecast]
    realized: dict           # (stock_id, date) -> raw return
    fits: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def by_stock(self, model_id):
        out = {}
        for f in self.forecasts[model_id]:
            out.setdefault(f.stock_id, []).append(f)
        return out


def produce_forecasts(config: RunConfig, series_list=None) -> ForecastSet:
    config.validate()
    series_list = load_series(config) if series_list is None else series_list
    if not series_list:
        raise DataError("no return series to process")
    tasks = [(s, m, config) for s in series_list for m in config.models]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    failures, fits = [], []
    failed_stocks = set()
    for stock, model_id, fc, diag, err in results:
        if err is not None:
            log.warning("stock=%s model=%s failed: %s", stock, model_id, err)
            failures.append({"stock_id": stock, "model": model_id, "error": err})
            failed_stocks.add(stock)
    stocks = [s.stock_id for s in series_list if s.stock_id not in failed_stocks]
    forecasts = {m: [] for m in config.models}
    for stock, model_id, fc, diag, err in results:
        if stock in failed_stocks:
            continue
        forecasts[model_id].extend(fc)
        fits.append(dict(stock_id=stock, model=model_id, **diag))
    realized = {}
    for s in series_list:
        if s.stock_id in failed_stocks:
            continue
        for d, r in zip(s.dates, s.returns):
            realized[(s.stock_id, d)] = float(r)
    return ForecastSet(list(config.models), stocks, forecasts, realized, fits, failures)


# --- tables ------------------------------------------------------------------

def _tradable(forecasts, k):
    counts = {}
    for f in forecasts:
        counts[f.date] = counts.get(f.date, 0) + 1
    return [f for f in forecasts if counts[f.date] >= 2 * k]


def backtest_tables(fs: ForecastSet, ks, risk_free=0.0):
    """Portfolio tables: overall (table3), detail (table4), halves, cumulative."""
    table3, table4, halves, cumulative = [], [], [], {}
    for k in ks:
        for m in fs.models:
            fc = _tradable(fs.forecasts[m], k)
            if not fc:
                raise DataError(f"no day has the 2k = {2 * k} stocks needed for model {m}")
            days, res = run_backtest(fc, fs.realized, k, risk_free)
            table3.append({"portfolio_k": k, "model": m, "avg_daily_return": res.mean,
                           "std_dev": res.std, "sharpe": res.sharpe})
            row = {"portfolio_k": k, "model": m, "long_mean": res.long_mean,
                   "short_mean": res.short_mean, "median": res.median}
            row.update({f"var_{lvl:g}": v for lvl, v in res.var.items()})
            table4.append(row)
            first, second = sub_period_report(res.daily_returns, risk_free,
                                              [d.long_return for d in days],
                                              [d.short_return for d in days])
            cut = len(first.daily_returns)
            for name, part, sl in (("first", first, slice(0, cut)), ("second", second, slice(cut, None))):
                ds = days[sl]
                halves.append({"portfolio_k": k, "model": m, "period": name,
                               "start": str(ds[0].date), "end": str(ds[-1].date),
                               "avg_daily_return": part.mean, "std_dev": part.std,
                               "sharpe": part.sharpe, "n_days": part.n_days,
                               "flags": ";".join(part.flags)})
            cum = np.cumsum(res.daily_returns)
            cumulative.setdefault(m, []).extend(
                {"portfolio_k": k, "date": str(d.date), "daily_return": d.realized_return,
                 "cumulative_return": float(c)}
                for d, c in zip(days, cum)
            )
    return table3, table4, halves, cumulative


def evaluation_tables(fs: ForecastSet, alphas):
    """Accuracy (table5), VaR tests (table6) and averaged acf/pacf rows."""
    stocks = fs.stocks
    per = {m: fs.by_stock(m) for m in fs.models}
    mse = np.zeros((len(fs.models), len(stocks)))
    acc = np.zeros_like(mse)
    stock_rows = []
    for i, m in enumerate(fs.models):
        for j, s in enumerate(stocks):
            fc = per[m][s]
            real = [fs.realized[(s, f.date)] for f in fc]
            mse[i, j], acc[i, j] = mse_and_accuracy([f.mu for f in fc], real)
            stock_rows.append({"model": m, "stock_id": s, "mse": mse[i, j], "accuracy": acc[i, j]})
    mse_mean, acc_mean = mse.mean(axis=1), acc.mean(axis=1)
    mse_occ, mse_occ_rank = occupying_ranking(mse, higher_is_better=False)
    acc_occ, acc_occ_rank = occupying_ranking(acc, higher_is_better=True)
    mse_rank = competition_rank(mse_mean)
    acc_rank = competition_rank(acc_mean, higher_is_better=True)
    table5 = [
        {"model": m, "mse": float(mse_mean[i]), "mse_rank": mse_rank[i],
         "mse_occupying": mse_occ[i], "mse_occupying_rank": mse_occ_rank[i],
         "accuracy": float(acc_mean[i]), "accuracy_rank": acc_rank[i],
         "accuracy_occupying": acc_occ[i], "accuracy_occupying_rank": acc_occ_rank[i]}
        for i, m in enumerate(fs.models)
    ]

    table6 = []
    for alpha in alphas:
        pv = np.zeros((len(fs.models), len(stocks)))
        for i, m in enumerate(fs.models):
            for j, s in enumerate(stocks):
                fc = per[m][s]
                f0 = fc[0]
                var = var_forecast_series([f.mu for f in fc], [f.sigma for f in fc], alpha,
                                          f0.dist, {"nu": f0.nu, "xi": f0.xi})
                real = [fs.realized[(s, f.date)] for f in fc]
                pv[i, j] = kupiec_test(real, var, alpha).p_value
        mean_p = pv.mean(axis=1)
        p_rank = competition_rank(mean_p, higher_is_better=True)
        dom, dom_rank = occupying_ranking(pv, higher_is_better=True)
        table6.extend(
            {"alpha": alpha, "model": m, "p_value": float(mean_p[i]), "p_rank": p_rank[i],
             "dominant_stocks": dom[i], "dominant_rank": dom_rank[i]}
            for i, m in enumerate(fs.models)
        )

    # realised test-period returns per stock, common to every model
    ref = per[fs.models[0]]
    series = [[fs.realized[(s, f.date)] for f in ref[s]] for s in stocks]
    diag_rows = []
    max_lag = min(20, min(len(x) for x in series) // 2 - 2)
    for p, (acf, pacf) in enumerate(averaged_diagnostics(series, 2, max_lag)):
        for lag in range(1, max_lag + 1):
            diag_rows.append({"period": ("first", "second")[p], "lag": lag,
                              "acf": float(acf[lag]), "pacf": float(pacf[lag - 1])})
    return table5, table6, diag_rows, stock_rows


@dataclass
class ReportBundle:
    tables: dict
    cumulative: dict
    fits: list
    metadata: dict
    forecasts: list = field(default_factory=list)
    wall_time: float = 0.0


def forecast_rows(fs: ForecastSet):
    rows = []
    for m in fs.models:
        for f in fs.forecasts[m]:
            rows.append({"date": str(f.date), "stock_id": f.stock_id, "model": m,
                         "mu": f.mu, "sigma": f.sigma, "dist": f.dist,
                         "nu": "" if f.nu is None else f.nu, "xi": "" if f.xi is None else f.xi,
                         "realized": fs.realized[(f.stock_id, f.date)]})
    return rows


def run_pipeline(config: RunConfig, series_list=None) -> ReportBundle:
    t0 = time.perf_counter()
    config.validate()
    fs = produce_forecasts(config, series_list)
    if not fs.stocks:
        raise DataError("every stock failed; nothing to report: "
                        + "; ".join(f"{f['stock_id']}/{f['model']}: {f['error']}" for f in fs.failures))
    t3, t4, halves, cumulative = backtest_tables(fs, config.portfolio_ks, config.risk_free)
    t5, t6, acf_rows, stock_rows = evaluation_tables(fs, config.var_alphas)
    metadata = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "models": list(config.models),
        "portfolio_ks": list(config.portfolio_ks),
        "var_alphas": list(config.var_alphas),
        "stocks": fs.stocks,
        "failures": fs.failures,
        "config": config.to_dict(),
    }
    return ReportBundle(
        tables={"table3": t3, "table4": t4, "table5": t5, "table6": t6,
                "subperiod": halves, "acf_pacf": acf_rows, "stock_metrics": stock_rows},
        cumulative=cumulative,
        fits=fs.fits,
        metadata=metadata,
        forecasts=forecast_rows(fs),
        wall_time=time.perf_counter() - t0,
    )
