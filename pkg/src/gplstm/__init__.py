"""Deep-kernel (LSTM + RBF) Gaussian-process return forecasting, GARCH
benchmarks, Sharpe-ranked long-short backtests and VaR evaluation."""

from .data import ReturnSeries, SyntheticSpec, ingest_csv, prepare_stock, simulate_synthetic
from .garch import GarchSpec, fit_mle, parse_model_id
from .gp import gp_posterior, nlml_and_grad
from .kernels import DeepKernelConfig, RbfHyperparams, deep_kernel_matrix, kernel_matrix
from .lstm import LstmParams, init_lstm, lstm_bptt, lstm_forward
from .pipeline import MODEL_IDS, RunConfig, run_pipeline
from .report import emit_report
from .strategy import backtest_stats, run_backtest, select_portfolio
from .training import GridSpec, TrainConfig, fit_deep_gp

__version__ = "0.1.0"
