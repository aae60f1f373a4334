import math
import statistics
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vollab import (
    GarchParams,
    GarchSpec,
    LstmConfig,
    ReturnSeries,
    backtest_garch,
    backtest_lstm,
    compare,
    fit,
    init,
    mae,
    normal,
    rmse,
    simulate,
)
from vollab.backtest import BacktestError, BacktestReport, comparison_csv, read_report, report_csv, report_summary
from vollab.estimation import FitResult
from vollab.garch import stationarity_margin


def series(values):
    start = date(2021, 1, 1)
    dates = tuple(start + timedelta(days=i) for i in range(len(values)))
    return ReturnSeries(dates=dates, values=np.asarray(values, dtype=float))


def manual_fit(family, params, n_obs=300):
    """A FitResult assembled by hand (no optimizer run)."""
    spec = GarchSpec(family, normal())
    return FitResult(
        spec=spec,
        params=params,
        loglik=0.0,
        bic=0.0,
        n_obs=n_obs,
        k=spec.n_params,
        converged=True,
        iterations=0,
        margin=stationarity_margin(spec, params),
    )


def zero_lstm(window_len=5, target="return"):
    cfg = LstmConfig(window_len=window_len, layer_sizes=(4, 3, 2), dropout=0.0, target=target)
    model = init(cfg, seed=0)
    for layer in model.layers:
        layer["wx"][:] = 0.0
        layer["wh"][:] = 0.0
        layer["b"][:] = 0.0
    model.head_w[:] = 0.0
    model.head_b[:] = 0.0
    model.scale_min, model.scale_max = 0.0, 1.0
    return model


class TestMetrics:
    def test_hand_example(self):
        assert rmse([1, 2], [1, 4]) == pytest.approx(math.sqrt(2), abs=1e-12)
        assert mae([1, 2], [1, 4]) == 1.0

    def test_identical_vectors(self):
        assert rmse([3.0, 4.0], [3.0, 4.0]) == 0.0
        assert mae([3.0, 4.0], [3.0, 4.0]) == 0.0

    def test_single_point(self):
        assert rmse([0.0], [3.0]) == 3.0
        assert mae([0.0], [3.0]) == 3.0

    def test_length_mismatch(self):
        with pytest.raises(BacktestError):
            rmse([1.0], [1.0, 2.0])
        with pytest.raises(BacktestError):
            mae([], [])

    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=-1e3, max_value=1e3),
                st.floats(min_value=-1e3, max_value=1e3),
            ),
            min_size=1,
            max_size=50,
        )
    )
    def test_rmse_dominates_mae(self, pairs):
        pred = [p for p, _ in pairs]
        actual = [a for _, a in pairs]
        assert rmse(pred, actual) >= mae(pred, actual) - 1e-12


class TestBacktestGarch:
    def test_constant_variance_prediction_is_sqrt_omega(self):
        rng = np.random.default_rng(0)
        r = series(rng.standard_normal(120))
        result = manual_fit("garch", GarchParams(mu=0.0, omega=1.0, alpha=0.0, beta=0.0))
        span = (r.dates[20], r.dates[-1])
        report = backtest_garch(result, r, span, window_len=10)
        # sigma2 is exactly omega for every index past 0
        np.testing.assert_allclose(report.predicted, 1.0, atol=1e-12)
        realized = [
            statistics.stdev(r.values[e - 9 : e + 1].tolist())
            for e in range(29, len(r.values))
        ]
        np.testing.assert_allclose(report.realized, realized, atol=1e-12)

    def test_brute_force_equivalence(self, garch_returns_1500):
        # independent recomputation: python-loop filter + stdev windows
        sub = ReturnSeries(
            dates=garch_returns_1500.dates[:300], values=garch_returns_1500.values[:300]
        )
        result = fit(GarchSpec("garch", normal()), sub)
        span = (sub.dates[0], sub.dates[-1])
        report = backtest_garch(result, sub, span, window_len=10)
        assert len(report.dates) == 300 - 10 + 1

        p = result.params
        eps = [v - p.mu for v in sub.values]
        s2 = [sum(e * e for e in eps) / len(eps)]
        for t in range(1, len(eps)):
            s2.append(p.omega + p.alpha * eps[t - 1] ** 2 + p.beta * s2[t - 1])
        for row, e in enumerate(range(9, 300)):
            realized = statistics.stdev(sub.values[e - 9 : e + 1].tolist())
            predicted = math.sqrt(sum(s2[e - 9 : e + 1]) / 10.0)
            assert abs(report.predicted[row] - predicted) < 1e-10
            assert abs(report.realized[row] - realized) < 1e-10

    def test_exact_window_span_single_row(self):
        rng = np.random.default_rng(1)
        r = series(rng.standard_normal(60))
        result = manual_fit("garch", GarchParams(mu=0.0, omega=0.5, alpha=0.0, beta=0.0))
        span = (r.dates[30], r.dates[39])
        report = backtest_garch(result, r, span, window_len=10)
        assert len(report.dates) == 1
        assert report.dates[0] == r.dates[39]

    def test_window_dates_increasing_and_are_window_ends(self):
        rng = np.random.default_rng(2)
        r = series(rng.standard_normal(40))
        result = manual_fit("garch", GarchParams(mu=0.0, omega=0.5, alpha=0.0, beta=0.0))
        report = backtest_garch(result, r, (r.dates[0], r.dates[-1]), window_len=10)
        assert report.dates == r.dates[9:]
        assert all(a < b for a, b in zip(report.dates, report.dates[1:]))

    def test_short_span_rejected(self):
        r = series(np.random.default_rng(3).standard_normal(40))
        result = manual_fit("garch", GarchParams(mu=0.0, omega=0.5, alpha=0.0, beta=0.0))
        with pytest.raises(BacktestError, match="shorter"):
            backtest_garch(result, r, (r.dates[0], r.dates[5]), window_len=10)

    def test_non_converged_fit_rejected(self):
        r = series(np.random.default_rng(4).standard_normal(40))
        result = manual_fit("garch", GarchParams(mu=0.0, omega=0.5, alpha=0.0, beta=0.0))
        from dataclasses import replace

        with pytest.raises(BacktestError, match="converged"):
            backtest_garch(replace(result, converged=False), r, (r.dates[0], r.dates[-1]))

    def test_deterministic(self, garch_returns_1500):
        result = manual_fit("garch", GarchParams(mu=0.0, omega=0.1, alpha=0.1, beta=0.8))
        span = (garch_returns_1500.dates[100], garch_returns_1500.dates[400])
        a = backtest_garch(result, garch_returns_1500, span)
        b = backtest_garch(result, garch_returns_1500, span)
        assert np.array_equal(a.predicted, b.predicted)
        assert a.rmse == b.rmse


class TestBacktestLstm:
    def test_zero_model_rmse_is_rms_of_actual(self):
        rng = np.random.default_rng(5)
        r = series(rng.standard_normal(60))
        model = zero_lstm()
        report = backtest_lstm(model, r, (r.dates[0], r.dates[-1]), units="percent")
        # scaler min is 0, so inverse-scaled zero predictions stay zero
        assert np.all(report.predicted == 0.0)
        actual = r.values[5:]
        assert report.rmse == pytest.approx(float(np.sqrt(np.mean(actual**2))), abs=1e-12)

    def test_row_count_is_evaluable_windows(self):
        rng = np.random.default_rng(6)
        r = series(rng.standard_normal(50))
        model = zero_lstm()
        span = (r.dates[10], r.dates[39])
        report = backtest_lstm(model, r, span)
        assert len(report.dates) == 30 - 5

    def test_units_tag_mandatory_and_valid(self):
        rng = np.random.default_rng(7)
        r = series(rng.standard_normal(30))
        model = zero_lstm()
        with pytest.raises(BacktestError, match="units"):
            backtest_lstm(model, r, (r.dates[0], r.dates[-1]), units="bogus")

    def test_scaled_units_need_scaler(self):
        rng = np.random.default_rng(8)
        r = series(rng.standard_normal(30))
        model = zero_lstm()
        model.scale_min = model.scale_max = None
        with pytest.raises(BacktestError, match="scaler"):
            backtest_lstm(model, r, (r.dates[0], r.dates[-1]), units="scaled")

    def test_scaled_and_percent_consistency(self):
        # same errors up to the scale span when min-max is (0, span)
        rng = np.random.default_rng(9)
        r = series(rng.standard_normal(40))
        model = zero_lstm()
        model.scale_min, model.scale_max = 0.0, 2.0
        span = (r.dates[0], r.dates[-1])
        scaled = backtest_lstm(model,, span, units="scaled")
        percent = backtest_lstm(model, r, span, units="percent")
        assert scaled.rmse == pytest.approx(percent.rmse / 2.0, rel=1e-12)

    def test_realized_vol_target_alignment(self):
        rng = np.random.default_rng(10)
        r = series(rng.standard_normal(80))
        model = zero_lstm(target="realized-vol")
        report = backtest_lstm(model, r, (r.dates[0], r.dates[-1]), window_len=10)
        # vol series has 71 points in span; windows of 5 leave 66 targets
        assert len(report.dates) == 71 - 5
        assert report.window_len == 10

    def test_span_too_short(self):
        rng = np.random.default_rng(11)
        r = series(rng.standard_normal(30))
        model = zero_lstm()
        with pytest.raises(BacktestError, match="window"):
            backtest_lstm(model, r, (r.dates[0], r.dates[4]))


class TestCompare:
    def _report(self, model_id, value, units="percent"):
        d = (date(2021, 1, 1), date(2021, 1, 2))
        return BacktestReport(
            model_id=model_id,
            window_len=10,
            dates=(d[0],),
            predicted=np.array([1.0]),
            realized=np.array([1.0]),
            rmse=value,
            mae=value / 2,
            units=units,
            span=d,
        )

    def test_banking_style_ordering(self):
        reports = [
            self._report("garch", 10.08),
            self._report("gjr", 10.00),
            self._report("egarch", 9.92),
        ]
        table = compare(reports, "banking")
        assert [row.model_id for row in table.rows] == ["egarch", "gjr", "garch"]
        assert [row.best for row in table.rows] == [True, False, False]
        assert table.note is None

    def test_singleton_flagged_best(self):
        table = compare([self._report("garch", 5.0)], "it")
        assert len(table.rows) == 1 and table.rows[0].best

    def test_cross_units_not_ranked(self):
        table = compare(
            [self._report("garch", 10.0), self._report("lstm", 0.01, units="scaled")],
            "pharma",
        )
        assert len([r for r in table.rows if r.best]) == 2  # one per group
        assert table.note is not None
        units_order = [r.units for r in table.rows]
        assert units_order == sorted(units_order)

    def test_empty_rejected(self):
        with pytest.raises(BacktestError):
            compare([], "x")


class TestReportIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(12)
        r = series(rng.standard_normal(40))
        result = manual_fit("garch", GarchParams(mu=0.0, omega=0.5, alpha=0.0, beta=0.0))
        report = backtest_garch(result, r, (r.dates[0], r.dates[-1]), window_len=10)
        csv_path = tmp_path / "report.csv"
        json_path = tmp_path / "report.summary.json"
        csv_path.write_text(report_csv(report))
        json_path.write_text(report_summary(report, sector="banking", phase="test"))
        loaded, summary = read_report(csv_path, json_path)
        assert summary["sector"] == "banking"
        assert loaded.rmse == report.rmse
        assert loaded.dates == report.dates
        np.testing.assert_array_equal(loaded.predicted, report.predicted)

    def test_comparison_csv_layout(self):
        table = compare(
            [self._mk("garch", 2.0), self._mk("lstm", 0.5, "scaled")], "banking"
        )
        text = comparison_csv(table)
        lines = text.strip().split("\n")
        assert lines[0].startswith("#")  # cross-unit note
        assert lines[1] == "sector,model,rmse,units,best"
        assert any(line.startswith("banking,garch,") for line in lines)

    def _mk(self, model_id, value, units="percent"):
        d = (date(2021, 1, 1), date(2021, 1, 2))
        return BacktestReport(
            model_id=model_id,
            window_len=10,
            dates=(d[0],),
            predicted=np.array([1.0]),
            realized=np.array([1.0]),
            rmse=value,
            mae=value / 2,
            units=units,
            span=d,
        )

    def test_rmse_mae_invariant_enforced(self):
        d = (date(2021, 1, 1), date(2021, 1, 2))
        with pytest.raises(BacktestError, match="power-mean"):
            BacktestReport(
                model_id="garch",
                window_len=10,
                dates=(d[0],),
                predicted=np.array([1.0]),
                realized=np.array([2.0]),
                rmse=0.5,
                mae=1.0,
                units="percent",
                span=d,
            )
