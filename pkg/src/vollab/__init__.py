"""Volatility forecasting laboratory.

GARCH, GJR-GARCH, and EGARCH maximum-likelihood estimation under normal,
Student-t, and skewed-t innovations; a stacked LSTM trained from scratch
on windowed return series; rolling-window backtesting with RMSE/MAE and
BIC-based model comparison.
"""

from .backtest import BacktestReport, ComparisonTable, backtest_garch, backtest_lstm, compare, mae, rmse
from .dist import InnovationDist, abs_moment, log_density, normal, sample, skew_t, student_t
from .estimation import (
    FitOptions,
    FitResult,
    bic,
    fit,
    infer,
    p_value,
    read_fit_document,
    select_order,
    write_fit_document,
)
from .garch import (
    ForecastResult,
    GarchParams,
    GarchSpec,
    VariancePath,
    filter_variance,
    forecast,
    log_likelihood,
    simulate,
    simulate_path,
    stationarity_margin,
)
from .lstm import (
    LstmConfig,
    TrainedLstm,
    WindowedDataset,
    build_scaled_windows,
    build_windows,
    gradient_check,
    init,
    load_model,
    predict,
    save_model,
    scale_fit_apply,
    train,
)
from .market_data import (
    PriceSeries,
    ReturnSeries,
    VolSeries,
    annualize,
    compute_returns,
    load_csv,
    realized_volatility,
    train_test_split,
)

__version__ = "0.1.0"
