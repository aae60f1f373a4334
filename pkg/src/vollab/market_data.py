"""Price loading, percent returns, realized volatility, and train/test splitting.

All return and volatility quantities are in percent units: a close moving
from 100 to 101 is a return of 1.0, and every downstream variance is in
percent squared.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from datetime import date, datetime

import numpy as np

TRADING_DAYS_PER_MONTH = 21
TRADING_DAYS_PER_YEAR = 252

_MISSING_TOKENS = {"", "na", "n/a", "nan", "null", "none"}


class MarketDataError(ValueError):
    """Raised for malformed price files or invalid series operations."""


def _parse_date(text: str, row: int) -> date:
    text = text.strip()
    try:
        return date.fromisoformat(text)
    except ValueError:
        pass
    try:
        return datetime.strptime(text, "%d-%m-%Y").date()
    except ValueError:
        raise MarketDataError(
            f"row {row}: unparseable date {text!r} (expected ISO-8601 or DD-MM-YYYY)"
        ) from None


@dataclass(frozen=True)
class PriceSeries:
    """Dated closing prices, sorted ascending, strictly positive."""

    dates: tuple
    closes: np.ndarray
    symbol: str = ""
    extra: dict = field(default_factory=dict)
    dropped_rows: int = 0

    def __post_init__(self):
        closes = np.asarray(self.closes, dtype=float)
        object.__setattr__(self, "closes", closes)
        object.__setattr__(self, "dates", tuple(self.dates))
        if len(self.dates) != len(closes):
            raise MarketDataError("dates and closes must have equal length")
        if len(closes) < 2:
            raise MarketDataError("price series needs at least 2 rows")
        for i in range(1, len(self.dates)):
            if self.dates[i] <= self.dates[i - 1]:
                raise MarketDataError(f"dates not strictly increasing at {self.dates[i]}")
        if not np.all(np.isfinite(closes)):
            raise MarketDataError("non-finite close value")
        bad = np.nonzero(closes <= 0)[0]
        if bad.size:
            raise MarketDataError(f"nonpositive close on {self.dates[bad[0]]}")

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class ReturnSeries:
    """Daily percent returns, dated by the later day of each price pair."""

    dates: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", tuple(self.dates))
        if len(self.dates) != len(values):
            raise MarketDataError("dates and values must have equal length")
        for i in range(1, len(self.dates)):
            if self.dates[i] <= self.dates[i - 1]:
                raise MarketDataError(f"dates not strictly increasing at {self.dates[i]}")

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class VolSeries:
    """Rolling realized volatility (percent), dated by each window's last day."""

    dates: tuple
    values: np.ndarray
    window_len: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", tuple(self.dates))
        if len(self.dates) != len(values):
            raise MarketDataError("dates and values must have equal length")
        if np.any(values < 0):
            raise MarketDataError("volatility values must be nonnegative")

    def __len__(self) -> int:
        return len(self.dates)


def load_csv(path, column: str = "Close") -> PriceSeries:
    """Load an OHLCV CSV file into a PriceSeries.

    The file must have a header row with a ``Date`` column and the requested
    price column. Rows whose requested value is missing are dropped and
    counted in ``dropped_rows``. Duplicate dates are rejected.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MarketDataError(f"{path}: file has no header row")
        fields = [name.strip() for name in reader.fieldnames]
        if "Date" not in fields:
            raise MarketDataError(f"{path}: missing required column 'Date'")
        if column not in fields:
            raise MarketDataError(f"{path}: missing requested column {column!r}")
        rows = []
        dropped = 0
        for i, raw in enumerate(reader, start=2):  # header is line 1
            raw = {(k.strip() if k else k): v for k, v in raw.items()}
            value = (raw.get(column) or "").strip()
            if value.lower() in _MISSING_TOKENS:
                dropped += 1
                continue
            d = _parse_date(raw["Date"], i)
            try:
                close = float(value)
            except ValueError:
                raise MarketDataError(
                    f"row {i}: unparseable value {value!r} in column {column!r}"
                ) from None
            rows.append((d, close))

    if len(rows) < 2:
        raise MarketDataError(f"{path}: fewer than 2 usable rows")
    rows.sort(key=lambda r: r[0])
    for (d1, _), (d2, _) in zip(rows, rows[1:]):
        if d1 == d2:
            raise MarketDataError(f"{path}: duplicate date {d1}")

    symbol = os.path.splitext(os.path.basename(str(path)))[0]
    return PriceSeries(
        dates=tuple(d for d, _ in rows),
        closes=np.array([c for _, c in rows]),
        symbol=symbol,
        dropped_rows=dropped,
    )


def compute_returns(prices: PriceSeries) -> ReturnSeries:
    """Percent change of consecutive closes: 100 * (c[t+1]/c[t] - 1)."""
    closes = prices.closes
    bad = np.nonzero(closes <= 0)[0]
    if bad.size:
        raise MarketDataError(f"nonpositive close on {prices.dates[bad[0]]}")
    values = 100.0 * (closes[1:] / closes[:-1] - 1.0)
    return ReturnSeries(dates=prices.dates[1:], values=values)


def realized_volatility(returns: ReturnSeries, window_len: int) -> VolSeries:
    """Rolling sample standard deviation (divisor n-1) over trailing windows."""
    if window_len < 2:
        raise MarketDataError("window_len must be at least 2")
    n = len(returns)
    if window_len > n:
        raise MarketDataError(f"window_len {window_len} exceeds series length {n}")
    values = returns.values
    out = np.empty(n - window_len + 1)
    for i in range(out.size):
        out[i] = np.std(values[i : i + window_len], ddof=1)
    return VolSeries(
        dates=returns.dates[window_len - 1 :], values=out, window_len=window_len
    )


def annualize(daily_vol: float, horizon: str) -> float:
    """Scale a daily volatility to a monthly (sqrt 21) or annual (sqrt 252) one."""
    if daily_vol < 0:
        raise MarketDataError("daily volatility must be nonnegative")
    if horizon == "monthly":
        return daily_vol * math.sqrt(TRADING_DAYS_PER_MONTH)
    if horizon == "annual":
        return daily_vol * math.sqrt(TRADING_DAYS_PER_YEAR)
    raise MarketDataError(f"unknown horizon {horizon!r} (expected 'monthly' or 'annual')")


def train_test_split(series: ReturnSeries, boundary: date) -> tuple:
    """Split into (dates <= boundary, dates > boundary); both parts nonempty."""
    if boundary < series.dates[0] or boundary >= series.dates[-1]:
        raise MarketDataError(
            f"split boundary {boundary} outside series range "
            f"[{series.dates[0]}, {series.dates[-1]})"
        )
    cut = sum(1 for d in series.dates if d <= boundary)
    train = ReturnSeries(dates=series.dates[:cut], values=series.values[:cut])
    test = ReturnSeries(dates=series.dates[cut:], values=series.values[cut:])
    return train, test
