from datetime import date, timedelta

import numpy as np
import pytest

from vollab import GarchParams, GarchSpec, compute_returns, load_csv, normal, simulate


def write_price_csv(path, closes, start=date(2020, 1, 1), extra_header=False):
    """Write a minimal OHLCV file with consecutive dates and the given closes."""
    lines = ["Date,Open,High,Low,Close,Adj Close,Volume"]
    for i, close in enumerate(closes):
        d = (start + timedelta(days=i)).isoformat()
        if close is None:
            lines.append(f"{d},1,1,1,,1,100")
        else:
            lines.append(f"{d},1,1,1,{close},1,100")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def price_csv(tmp_path):
    def make(closes, **kwargs):
        return write_price_csv(tmp_path / "prices.csv", closes, **kwargs)

    return make


@pytest.fixture(scope="session")
def garch_returns_1500():
    """A moderately sized simulated GARCH series shared across tests."""
    spec = GarchSpec("garch", normal())
    params = GarchParams(mu=0.02, omega=0.1, alpha=0.1, beta=0.8)
    return simulate(spec, params, 1500, seed=2024)


@pytest.fixture(scope="session")
def gjr_returns_1500():
    spec = GarchSpec("gjr", normal())
    params = GarchParams(mu=0.0, omega=0.1, alpha=0.05, beta=0.8, gamma=0.15)
    return simulate(spec, params, 1500, seed=77)


def prices_from_returns(returns_pct, p0=100.0):
    """Rebuild a close path whose percent changes equal returns_pct."""
    closes = [p0]
    for r in returns_pct:
        closes.append(closes[-1] * (1.0 + r / 100.0))
    return closes
