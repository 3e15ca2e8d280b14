"""
Command-line entry point.

    gplstm synth    --out data.csv [--seed S] [--n-stocks N] [--n-days D]
    gplstm ingest   data.csv
    gplstm train    --config run.yaml --out DIR
    gplstm backtest --config run.yaml --out DIR
    gplstm evaluate --config run.yaml --out DIR
    gplstm report   --config run.yaml --out DIR

Exit codes: 0 ok, 2 configuration/usage, 3 data, 4 numerical, 1 other.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np
import yaml

from .data import DataError, SyntheticSpec, ingest_csv, simulate_synthetic, write_csv
from .garch import EstimationError, VarianceUnderflowError
from .pipeline import (
    ConfigError,
    ReportBundle,
    RunConfig,
    SyntheticConfig,
    backtest_tables,
    evaluation_tables,
    forecast_rows,
    produce_forecasts,
    run_pipeline,
)
from .report import emit_report
from .training import GridExhaustedError, TrainingDivergedError

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4

log = logging.getLogger("gplstm")


def load_config(path):
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    return RunConfig.from_dict(raw)


def _apply_overrides(cfg: RunConfig, args):
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
        if cfg.synthetic is not None:
            cfg = replace(cfg, synthetic=replace(cfg.synthetic, seed=args.seed))
    if args.models:
        cfg = replace(cfg, models=[m.strip() for m in args.models.split(",") if m.strip()])
    if args.k:
        try:
            cfg = replace(cfg, portfolio_ks=[int(k) for k in args.k.split(",")])
        except ValueError:
            raise ConfigError(f"--k expects comma-separated integers, got {args.k!r}") from None
    if args.synthetic:
        cfg = replace(cfg, csv=None, synthetic=cfg.synthetic or SyntheticConfig(seed=cfg.seed))
    if args.data:
        cfg = replace(cfg, csv=args.data, synthetic=None)
    if args.out:
        cfg = replace(cfg, output_dir=args.out)
    if args.workers:
        cfg = replace(cfg, workers=args.workers)
    if cfg.csv is None and cfg.synthetic is None:
        cfg = replace(cfg, synthetic=SyntheticConfig(seed=cfg.seed))
    return cfg.validate()


def _cmd_synth(args):
    out = args.out or "synthetic.csv"
    series = simulate_synthetic(SyntheticSpec(mode=args.mode), args.n_stocks, args.n_days,
                                args.seed or 0)
    write_csv(series, out)
    print(f"wrote {len(series)} series x {args.n_days} days to {out}")
    return EXIT_OK


def _cmd_ingest(args):
    series = ingest_csv(args.path)
    for s in series:
        r = s.returns
        print(f"{s.stock_id}: {len(r)} returns {s.dates[0]}..{s.dates[-1]} "
              f"mean={np.mean(r):.6g} std={np.std(r):.6g}")
    print(f"ok: {len(series)} series")
    return EXIT_OK


def _bundle(cfg, fs, tables, cumulative=None, with_forecasts=True):
    return ReportBundle(
        tables=tables,
        cumulative=cumulative or {},
        fits=fs.fits,
        metadata={"config_hash": cfg.config_hash(), "seed": cfg.seed, "models": cfg.models,
                  "stocks": fs.stocks, "failures": fs.failures, "config": cfg.to_dict()},
        forecasts=forecast_rows(fs) if with_forecasts else [],
    )


def _cmd_run(args):
    cfg = _apply_overrides(load_config(args.config), args)
    if args.command == "report":
        bundle = run_pipeline(cfg)
    else:
        fs = produce_forecasts(cfg)
        if not fs.stocks:
            raise DataError("every stock failed: " + json.dumps(fs.failures))
        tables, cumulative = {}, {}
        if args.command == "backtest":
            t3, t4, halves, cumulative = backtest_tables(fs, cfg.portfolio_ks, cfg.risk_free)
            tables = {"table3": t3, "table4": t4, "subperiod": halves}
        elif args.command == "evaluate":
            t5, t6, acf_rows, stock_rows = evaluation_tables(fs, cfg.var_alphas)
            tables = {"table5": t5, "table6": t6, "acf_pacf": acf_rows, "stock_metrics": stock_rows}
        bundle = _bundle(cfg, fs, tables, cumulative)
    paths = emit_report(bundle, cfg.output_dir)
    for f in bundle.metadata.get("failures", []):
        print(f"excluded {f['stock_id']} ({f['model']}): {f['error']}", file=sys.stderr)
    print(f"wrote {len(paths)} files to {cfg.output_dir}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="gplstm", description=__doc__.split("\n")[1])
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v fit summaries, -vv per-epoch lines")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic return dataset as CSV")
    s.add_argument("--out")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-stocks", type=int, default=5)
    s.add_argument("--n-days", type=int, default=600)
    s.add_argument("--mode", choices=("mixed", "garch", "regime"), default="mixed")
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("ingest", help="validate an input CSV")
    s.add_argument("path")
    s.set_defaults(func=_cmd_ingest)

    helps = {
        "train": "fit every model and write forecasts and fit diagnostics",
        "backtest": "fit, forecast and run the long-short backtests",
        "evaluate": "fit, forecast and compute accuracy, VaR and acf/pacf tables",
        "report": "full run: every table and the JSON report",
    }
    for name, text in helps.items():
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", help="YAML run configuration")
        s.add_argument("--out", help="output directory (overrides output_dir)")
        s.add_argument("--seed", type=int)
        s.add_argument("--models", help="comma-separated model ids")
        s.add_argument("--k", help="comma-separated portfolio sizes")
        s.add_argument("--synthetic", action="store_true", help="use the synthetic generator")
        s.add_argument("--data", help="input CSV path, or 'bundled'")
        s.add_argument("--workers", type=int)
        s.set_defaults(func=_cmd_run)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (np.linalg.LinAlgError, TrainingDivergedError, GridExhaustedError,
            VarianceUnderflowError, EstimationError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
