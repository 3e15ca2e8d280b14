"""
Report emission: one JSON document plus per-table CSV files.

Everything written here is a pure function of the bundle minus its wall
time, which goes to a separate ``timing.json`` so that reruns with the same
config and seed produce byte-identical report files.
"""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

__all__ = ["TABLE_COLUMNS", "emit_report", "format_value"]

TABLE_COLUMNS = {
    "table3": ["portfolio_k", "model", "avg_daily_return", "std_dev", "sharpe"],
    "table4": ["portfolio_k", "model", "long_mean", "short_mean", "median",
               "var_0.05", "var_0.075", "var_0.1"],
    "table5": ["model", "mse", "mse_rank", "mse_occupying", "mse_occupying_rank",
               "accuracy", "accuracy_rank", "accuracy_occupying", "accuracy_occupying_rank"],
    "table6": ["alpha", "model", "p_value", "p_rank", "dominant_stocks", "dominant_rank"],
    "subperiod": ["portfolio_k", "model", "period", "start", "end", "avg_daily_return",
                  "std_dev", "sharpe", "n_days", "flags"],
    "acf_pacf": ["period", "lag", "acf", "pacf"],
    "stock_metrics": ["model", "stock_id", "mse", "accuracy"],
}
CUMULATIVE_COLUMNS = ["portfolio_k", "date", "daily_return", "cumulative_return"]
FORECAST_COLUMNS = ["date", "stock_id", "model", "mu", "sigma", "dist", "nu", "xi", "realized"]


def format_value(v):
    """Stable text for CSV cells: repr-exact floats, empty for missing."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    if isinstance(v, np.integer):
        return str(int(v))
    return "" if v is None else str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        obj = float(obj)
        return None if not math.isfinite(obj) else obj
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if obj is None or isinstance(obj, (str, int, bool)):
        return obj
    return str(obj)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row.get(c)) for c in columns])


def _fit_columns(fits):
    cols = ["stock_id", "model"]
    for row in fits:
        cols.extend(c for c in row if c not in cols)
    return cols


def emit_report(bundle, out_dir):
    """Write the report and return the list of written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def path(name):
        p = os.path.join(out_dir, name)
        written.append(p)
        return p

    doc = {
        "metadata": bundle.metadata,
        "tables": bundle.tables,
        "fits": bundle.fits,
    }
    with open(path("report.json"), "w", encoding="utf-8") as fh:
        json.dump(_jsonable(doc), fh, sort_keys=True, indent=2)
        fh.write("\n")

    for name, columns in TABLE_COLUMNS.items():
        _write_csv(path(f"{name}.csv"), columns, bundle.tables.get(name, []))
    for model, rows in sorted(bundle.cumulative.items()):
        _write_csv(path(f"cumulative_{model}.csv"), CUMULATIVE_COLUMNS, rows)
    _write_csv(path("fits.csv"), _fit_columns(bundle.fits), bundle.fits)
    _write_csv(path("forecasts.csv"), FORECAST_COLUMNS, bundle.forecasts)

    # wall time is the one non-deterministic quantity; keep it apart
    with open(os.path.join(out_dir, "timing.json"), "w", encoding="utf-8") as fh:
        json.dump({"wall_time_seconds": round(bundle.wall_time, 3)}, fh)
        fh.write("\n")
    return written
