"""Rolling-window evaluation of volatility predictions and model comparison.

A backtest slides a fixed window (default 10 days) over the evaluation
span. Realized volatility is the sample standard deviation of the returns
in the window; a GARCH model's prediction for the same window is the root
mean of its one-step-ahead conditional variances there, produced by
filtering the full history once with the fitted parameters held fixed.
RMSE is only comparable between reports sharing a units tag, so rankings
never cross the percent/scaled boundary.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import date
from types import SimpleNamespace

import numpy as np

from .garch import filter_variance
from .lstm import TrainedLstm, build_windows, forward, invert_scale
from .market_data import ReturnSeries, realized_volatility

UNITS = ("percent", "scaled")


class BacktestError(ValueError):
    """Raised for invalid evaluation spans or mismatched inputs."""


def rmse(pred, actual) -> float:
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape or pred.size == 0:
        raise BacktestError("rmse needs equal-length nonempty vectors")
    err = pred - actual
    return float(np.sqrt(np.mean(err * err)))


def mae(pred, actual) -> float:
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape or pred.size == 0:
        raise BacktestError("mae needs equal-length nonempty vectors")
    return float(np.mean(np.abs(pred - actual)))


@dataclass(frozen=True)
class BacktestReport:
    """Predicted vs realized volatility per window plus summary metrics."""

    model_id: str
    window_len: int
    dates: tuple
    predicted: np.ndarray
    realized: np.ndarray
    rmse: float
    mae: float
    units: str
    span: tuple

    def __post_init__(self):
        object.__setattr__(self, "predicted", np.asarray(self.predicted, dtype=float))
        object.__setattr__(self, "realized", np.asarray(self.realized, dtype=float))
        object.__setattr__(self, "dates", tuple(self.dates))
        if not (len(self.dates) == self.predicted.size == self.realized.size):
            raise BacktestError("dates, predicted, and realized must align")
        if self.units not in UNITS:
            raise BacktestError(f"unknown units tag {self.units!r}")
        if self.rmse < 0 or self.mae < 0:
            raise BacktestError("rmse and mae must be nonnegative")
        # quadratic mean dominates the mean of absolutes
        if self.rmse < self.mae - 1e-12:
            raise BacktestError("rmse < mae violates the power-mean inequality")


@dataclass(frozen=True)
class ComparisonRow:
    sector: str
    model_id: str
    rmse: float
    units: str
    best: bool


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple
    note: str | None = None


def _span_indices(dates, span) -> np.ndarray:
    start, end = span
    if end < start:
        raise BacktestError(f"evaluation span {start}..{end} is empty")
    idx = np.array([i for i, d in enumerate(dates) if start <= d <= end])
    if idx.size == 0:
        raise BacktestError(f"evaluation span {start}..{end} contains no observations")
    return idx


def backtest_garch(
    fit_result, full_returns: ReturnSeries, eval_span: tuple, window_len: int = 10
) -> BacktestReport:
    """Evaluate a fitted GARCH-family model over rolling windows in a span.

    Parameters stay fixed (no refitting); conditional variances come from
    one filtering pass over the full history. Every window lies entirely
    inside the span, so the report has span_length - window_len + 1 rows.
    """
    if not fit_result.converged:
        raise BacktestError("backtest requires a converged fit")
    idx = _span_indices(full_returns.dates, eval_span)
    if idx.size < window_len:
        raise BacktestError(
            f"evaluation span has {idx.size} days, shorter than the {window_len}-day window"
        )
    path = filter_variance(fit_result.spec, fit_result.params, full_returns)
    values = full_returns.values

    ends = range(int(idx[0]) + window_len - 1, int(idx[-1]) + 1)
    predicted = np.empty(len(ends))
    realized = np.empty(len(ends))
    dates = []
    for row, e in enumerate(ends):
        window = slice(e - window_len + 1, e + 1)
        realized[row] = np.std(values[window], ddof=1)
        predicted[row] = math.sqrt(float(np.mean(path.sigma2[window])))
        dates.append(full_returns.dates[e])
    return BacktestReport(
        model_id=fit_result.spec.family,
        window_len=window_len,
        dates=tuple(dates),
        predicted=predicted,
        realized=realized,
        rmse=rmse(predicted, realized),
        mae=mae(predicted, realized),
        units="percent",
        span=tuple(eval_span),
    )


def backtest_lstm(
    model: TrainedLstm,
    series: ReturnSeries,
    eval_span: tuple,
    window_len: int = 10,
    units: str = "percent",
) -> BacktestReport:
    """Evaluate an LSTM's next-step predictions over a span.

    With the model's target = "return" this scores next-day return
    prediction; with "realized-vol" it scores the next-day rolling
    volatility. Input windows are built inside the span only. The units
    tag is mandatory: "percent" compares in original units, "scaled" in
    the model's min-max space (which requires a fitted scaler).
    """
    if units not in UNITS:
        raise BacktestError(f"unknown units tag {units!r}")
    if model.config.target == "realized-vol":
        base = realized_volatility(series, window_len)
        report_window = window_len
    else:
        base = series
        report_window = model.config.window_len
    idx = _span_indices(base.dates, eval_span)
    sub_dates = tuple(base.dates[i] for i in idx)
    sub_values = base.values[idx]
    if sub_values.size <= model.config.window_len:
        raise BacktestError(
            f"evaluation span has {sub_values.size} usable days, "
            f"not more than the model window {model.config.window_len}"
        )

    has_scaler = model.scale_min is not None
    if units == "scaled" and not has_scaler:
        raise BacktestError("scaled-units backtest requires a model with a fitted scaler")
    scaling = (model.scale_min, model.scale_max) if has_scaler else None

    sub = SimpleNamespace(dates=sub_dates, values=sub_values)
    ds = build_windows(sub, model.config.window_len, scaling=scaling)
    raw = np.empty(ds.num_samples)
    for start in range(0, ds.num_samples, 512):
        chunk = ds.inputs[start : start + 512]
        raw[start : start + chunk.shape[0]] = forward(model, chunk)[0]

    if units == "scaled":
        predicted = raw
        realized = ds.targets
    else:
        predicted = invert_scale(raw, *scaling) if has_scaler else raw
        realized = sub_values[model.config.window_len :]
    return BacktestReport(
        model_id="lstm",
        window_len=report_window,
        dates=ds.dates,
        predicted=predicted,
        realized=realized,
        rmse=rmse(predicted, realized),
        mae=mae(predicted, realized),
        units=units,
        span=tuple(eval_span),
    )


def compare(reports, sector: str) -> ComparisonTable:
    """Rank reports by ascending RMSE within each units group.

    The lowest-RMSE row of each group is flagged best. Groups are never
    ranked against each other; a note records the refusal when both units
    appear.
    """
    reports = list(reports)
    if not reports:
        raise BacktestError("compare needs at least one report")
    rows = []
    for units in sorted({r.units for r in reports}):
        group = sorted(
            (r for r in reports if r.units == units), key=lambda r: (r.rmse, r.model_id)
        )
        for rank, rep in enumerate(group):
            rows.append(
                ComparisonRow(
                    sector=sector,
                    model_id=rep.model_id,
                    rmse=rep.rmse,
                    units=units,
                    best=rank == 0,
                )
            )
    note = None
    if len({r.units for r in reports}) > 1:
        note = "rmse is ranked only within identical units; percent and scaled rows are not comparable"
    return ComparisonTable(rows=tuple(rows), note=note)


def report_csv(report: BacktestReport) -> str:
    lines = ["date,predicted,realized"]
    for d, p, a in zip(report.dates, report.predicted, report.realized):
        lines.append(f"{d.isoformat()},{p!r},{a!r}")
    return "\n".join(lines) + "\n"


def report_summary(report: BacktestReport, **extra) -> str:
    doc = {
        "model_id": report.model_id,
        "window_len": report.window_len,
        "rmse": report.rmse,
        "mae": report.mae,
        "units": report.units,
        "span": [report.span[0].isoformat(), report.span[1].isoformat()],
    }
    doc.update(extra)
    return json.dumps(doc, sort_keys=True) + "\n"


def read_report(csv_path, summary_path) -> tuple:
    """Load a report written by report_csv/report_summary; returns (report, summary)."""
    with open(summary_path, encoding="utf-8") as fh:
        summary = json.load(fh)
    dates = []
    predicted = []
    realized = []
    with open(csv_path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "date,predicted,realized":
            raise BacktestError(f"{csv_path}: unexpected header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d, p, a = line.split(",")
            dates.append(date.fromisoformat(d))
            predicted.append(float(p))
            realized.append(float(a))
    report = BacktestReport(
        model_id=summary["model_id"],
        window_len=int(summary["window_len"]),
        dates=tuple(dates),
        predicted=np.array(predicted),
        realized=np.array(realized),
        rmse=float(summary["rmse"]),
        mae=float(summary["mae"]),
        units=summary["units"],
        span=(date.fromisoformat(summary["span"][0]), date.fromisoformat(summary["span"][1])),
    )
    return report, summary


def comparison_csv(table: ComparisonTable) -> str:
    lines = []
    if table.note:
        lines.append(f"# {table.note}")
    lines.append("sector,model,rmse,units,best")
    for row in table.rows:
        lines.append(
            f"{row.sector},{row.model_id},{row.rmse!r},{row.units},{'yes' if row.best else 'no'}"
        )
    return "\n".join(lines) + "\n"
