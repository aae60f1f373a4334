"""Command-line pipeline: ingest, fit, select, forecast, train-lstm, backtest, compare.

Every run is reproducible: all randomness derives from the single --seed
(default 12345) with a fixed per-stage offset, and every output file is
written with round-trippable number formatting, so identical configs give
byte-identical artifacts.

Seed derivation: LSTM weight init uses seed; LSTM shuffling/dropout uses
seed + 1 (applied inside training); EGARCH Monte-Carlo forecasting uses
seed + 2.

Plot-oriented outputs are data files only: backtest emits predicted-vs-
realized CSVs and a return-vs-conditional-volatility CSV; train-lstm emits
the per-epoch loss CSV.
"""
from __future__ import annotations

import argparse
import os
import sys
from datetime import date
from types import SimpleNamespace

import numpy as np

from . import backtest as bt
from . import estimation as est
from . import lstm as nn
from . import market_data as md
from .dist import InnovationDist
from .garch import GarchSpec, filter_variance, forecast

DEFAULT_SEED = 12345
EGARCH_FORECAST_PATHS = 10000

GARCH_MODELS = ("garch", "gjr", "egarch")


def _dist_from_token(token: str) -> InnovationDist:
    kind = est.DIST_KINDS[token]
    if kind == "normal":
        return InnovationDist("normal")
    if kind == "student_t":
        return InnovationDist("student_t", nu=8.0)
    return InnovationDist("skew_t", nu=8.0, lam=0.0)


def _parse_date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise ValueError(f"invalid date {text!r} (expected YYYY-MM-DD)") from None


def _load_returns(args) -> md.ReturnSeries:
    prices = md.load_csv(args.input, column=args.column)
    return md.compute_returns(prices)


def _split_dated(dates, values, boundary: date):
    cut = sum(1 for d in dates if d <= boundary)
    if cut == 0 or cut == len(dates):
        raise ValueError(f"split boundary {boundary} leaves an empty partition")
    return (dates[:cut], values[:cut]), (dates[cut:], values[cut:])


def _ensure_out(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _sector(args) -> str:
    return os.path.splitext(os.path.basename(args.input))[0]


def _fit_or_load(args, returns: md.ReturnSeries):
    """Reuse a fit document in --out when present, else fit and write one."""
    out = _ensure_out(args)
    doc_path = os.path.join(out, f"fit_{args.model}_{args.dist}.txt")
    if os.path.exists(doc_path):
        result = est.read_fit_document(doc_path)
        if result.spec.family != args.model:
            raise ValueError(f"{doc_path}: family mismatch with --model {args.model}")
        return result, doc_path, True
    spec = GarchSpec(args.model, _dist_from_token(args.dist))
    result = est.fit(spec, returns)
    est.write_fit_document(result, doc_path)
    return result, doc_path, False


def _print_fit(result) -> None:
    spec = result.spec
    print(
        f"model: {spec.family} / {est.DIST_TOKENS[spec.dist.kind]}  "
        f"n_obs: {result.n_obs}  k: {result.k}"
    )
    print(
        f"converged: {str(result.converged).lower()}  iterations: {result.iterations}  "
        f"stationarity margin: {result.margin:.6f}"
    )
    names = spec.param_names()
    values = result.params.as_dict()
    values["nu"] = spec.dist.nu
    values["lambda"] = spec.dist.lam
    print(f"{'param':<8}{'estimate':>14}{'stderr':>14}{'p-value':>12}")
    for name in names:
        se = result.stderr.get(name) if result.stderr else None
        pv = result.p_values.get(name) if result.p_values else None
        se_s = f"{se:.6f}" if se is not None else "n/a"
        pv_s = f"{pv:.4g}" if pv is not None else "n/a"
        print(f"{name:<8}{values[name]:>14.6f}{se_s:>14}{pv_s:>12}")
    if result.stderr_note:
        print(f"note: {result.stderr_note}")
    print(f"loglik: {result.loglik:.6f}  bic: {result.bic:.4f}")


def _train_series(args, returns: md.ReturnSeries):
    """Train/test partitions of the LSTM's target series (return or vol)."""
    boundary = _parse_date(args.split)
    if args.target == "realized-vol":
        vol = md.realized_volatility(returns, args.window)
        (d1, v1), (d2, v2) = _split_dated(vol.dates, vol.values, boundary)
        return SimpleNamespace(dates=d1, values=v1), SimpleNamespace(dates=d2, values=v2)
    return md.train_test_split(returns, boundary)


def _lstm_config(args) -> nn.LstmConfig:
    return nn.LstmConfig(
        batch_size=args.batch_size,
        epochs=args.epochs,
        learning_rate=args.lr,
        seed=args.seed,
        target=args.target,
    )


def _train_lstm_model(args, returns: md.ReturnSeries) -> nn.TrainedLstm:
    train_s, test_s = _train_series(args, returns)
    cfg = _lstm_config(args)
    train_ds, test_ds = nn.build_scaled_windows(train_s, test_s, cfg.window_len)
    model = nn.init(cfg, seed=args.seed)
    nn.train(model, train_ds, test_ds)
    return model


def cmd_ingest(args) -> int:
    prices = md.load_csv(args.input, column=args.column)
    returns = md.compute_returns(prices)
    daily = float(np.std(returns.values, ddof=1))
    print(f"file: {args.input}  column: {args.column}")
    print(f"rows: {len(prices)} (dropped {prices.dropped_rows})")
    print(f"span: {prices.dates[0]} .. {prices.dates[-1]}")
    print(f"returns: {len(returns)} observations, mean {float(np.mean(returns.values)):.6f}")
    print(f"daily vol: {daily:.6f}")
    print(f"monthly vol (sqrt 21): {md.annualize(daily, 'monthly'):.6f}")
    print(f"annual vol (sqrt 252): {md.annualize(daily, 'annual'):.6f}")
    return 0


def cmd_fit(args) -> int:
    returns = _load_returns(args)
    if args.split:
        returns, _ = md.train_test_split(returns, _parse_date(args.split))
    result, doc_path, loaded = _fit_or_load(args, returns)
    if loaded:
        print(f"loaded existing fit document {doc_path}")
    _print_fit(result)
    if not loaded:
        print(f"wrote {doc_path}")
    if not result.converged:
        print("error: fit did not converge", file=sys.stderr)
        return 1
    return 0


def cmd_select(args) -> int:
    returns = _load_returns(args)
    if args.split:
        returns, _ = md.train_test_split(returns, _parse_date(args.split))
    p, q, rows = est.select_order(
        returns, args.model, (1, 2), (1, 2), dist=_dist_from_token(args.dist)
    )
    print(f"{'p':>3}{'q':>3}{'bic':>16}  status")
    for row in rows:
        bic_s = f"{row['bic']:.4f}" if row["bic"] is not None else "-"
        print(f"{row['p']:>3}{row['q']:>3}{bic_s:>16}  {row['status']}")
    print(f"selected order: ({p}, {q})")
    return 0


def cmd_forecast(args) -> int:
    returns = _load_returns(args)
    if args.split:
        returns, _ = md.train_test_split(returns, _parse_date(args.split))
    result, _, _ = _fit_or_load(args, returns)
    if not result.converged:
        raise ValueError("cannot forecast from a non-converged fit")
    path = filter_variance(result.spec, result.params, returns)
    fc = forecast(
        result.spec,
        result.params,
        path,
        horizon=args.horizon,
        n_paths=EGARCH_FORECAST_PATHS,
        seed=args.seed + 2,
    )
    out = _ensure_out(args)
    csv_path = os.path.join(out, f"forecast_{args.model}_{args.dist}.csv")
    lines = ["step,sigma2,sigma"]
    for h in range(fc.horizon):
        lines.append(f"{h + 1},{fc.sigma2_path[h]!r},{fc.sigma_path[h]!r}")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(
        f"forecast: {args.model}/{args.dist} horizon {fc.horizon} ({fc.method}), "
        f"day-1 vol {fc.sigma_path[0]:.6f}, day-{fc.horizon} vol {fc.sigma_path[-1]:.6f}"
    )
    print(f"wrote {csv_path}")
    return 0


def cmd_train_lstm(args) -> int:
    returns = _load_returns(args)
    model = _train_lstm_model(args, returns)
    out = _ensure_out(args)
    model_path = os.path.join(out, "lstm_model.bin")
    loss_path = os.path.join(out, "lstm_loss.csv")
    nn.save_model(model, model_path)
    with open(loss_path, "w", encoding="utf-8") as fh:
        fh.write(nn.loss_history_csv(model))
    final_train, final_val = model.loss_history[-1]
    print(
        f"trained lstm ({args.epochs} epochs, target {args.target}): "
        f"final train mse {final_train:.6g}, val mse {final_val:.6g} (scaled units)"
    )
    print(f"wrote {model_path}")
    print(f"wrote {loss_path}")
    return 0


def _write_report(report, out: str, name: str, sector: str, phase: str) -> None:
    csv_path = os.path.join(out, f"backtest_{name}.csv")
    json_path = os.path.join(out, f"backtest_{name}.summary.json")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(bt.report_csv(report))
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(bt.report_summary(report, sector=sector, phase=phase))
    print(
        f"backtest {report.model_id} {phase} ({report.units}): "
        f"rmse {report.rmse:.6g}, mae {report.mae:.6g}, {len(report.dates)} windows"
    )
    print(f"wrote {csv_path}")


def cmd_backtest(args) -> int:
    returns = _load_returns(args)
    boundary = _parse_date(args.split)
    train, test = md.train_test_split(returns, boundary)
    spans = {
        "train": (train.dates[0], train.dates[-1]),
        "test": (test.dates[0], test.dates[-1]),
    }
    out = _ensure_out(args)
    sector = _sector(args)

    if args.model in GARCH_MODELS:
        result, _, _ = _fit_or_load(args, train)
        for phase, span in spans.items():
            report = bt.backtest_garch(result, returns, span, window_len=args.window)
            _write_report(report, out, f"{args.model}_{phase}", sector, phase)
        path = filter_variance(result.spec, result.params, returns)
        vol_path = os.path.join(out, f"cond_vol_{args.model}.csv")
        lines = ["date,return,cond_vol"]
        for d, r, s2 in zip(returns.dates, returns.values, path.sigma2):
            lines.append(f"{d.isoformat()},{r!r},{float(np.sqrt(s2))!r}")
        with open(vol_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"wrote {vol_path}")
        return 0

    model_path = os.path.join(out, "lstm_model.bin")
    if os.path.exists(model_path):
        model = nn.load_model(model_path)
    else:
        model = _train_lstm_model(args, returns)
        nn.save_model(model, model_path)
        print(f"wrote {model_path}")
    for phase, span in spans.items():
        for units in ("percent", "scaled"):
            report = bt.backtest_lstm(
                model, returns, span, window_len=args.window, units=units
            )
            _write_report(report, out, f"lstm_{phase}_{units}", sector, phase)
    return 0


def cmd_compare(args) -> int:
    out = args.out
    if not os.path.isdir(out):
        raise ValueError(f"output directory {out!r} does not exist")
    by_sector: dict[str, list] = {}
    for name in sorted(os.listdir(out)):
        if not name.endswith(".summary.json"):
            continue
        csv_name = name.replace(".summary.json", ".csv")
        csv_path = os.path.join(out, csv_name)
        if not os.path.exists(csv_path):
            continue
        report, summary = bt.read_report(csv_path, os.path.join(out, name))
        if summary.get("phase") != "test":
            continue
        by_sector.setdefault(summary.get("sector", "unknown"), []).append(report)
    if not by_sector:
        raise ValueError(f"no test-phase backtest reports found in {out!r}")
    all_rows = []
    notes = []
    for sector in sorted(by_sector):
        table = bt.compare(by_sector[sector], sector)
        all_rows.extend(table.rows)
        if table.note:
            notes.append(table.note)
    combined = bt.ComparisonTable(rows=tuple(all_rows), note=notes[0] if notes else None)
    csv_path = os.path.join(out, "comparison.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(bt.comparison_csv(combined))
    print(f"{'sector':<14}{'model':<10}{'rmse':>14}{'units':>10}{'best':>6}")
    for row in combined.rows:
        print(
            f"{row.sector:<14}{row.model_id:<10}{row.rmse:>14.6g}{row.units:>10}"
            f"{'yes' if row.best else 'no':>6}"
        )
    if combined.note:
        print(f"note: {combined.note}")
    print(f"wrote {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vollab",
        description="Volatility model laboratory: GARCH-family MLE, LSTM training, backtesting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common_io(p):
        p.add_argument("--input", required=True, help="OHLCV CSV file")
        p.add_argument("--column", default="Close", help="price column (default Close)")

    def common_out(p):
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p = sub.add_parser("ingest", help="validate a CSV and print volatility summary")
    common_io(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit a GARCH-family model and write a fit document")
    common_io(p)
    p.add_argument("--split", help="fit on dates <= this boundary (YYYY-MM-DD)")
    p.add_argument("--model", required=True, choices=GARCH_MODELS)
    p.add_argument("--dist", default="skewt", choices=sorted(est.DIST_KINDS))
    common_out(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="BIC order grid search")
    common_io(p)
    p.add_argument("--split", help="use dates <= this boundary")
    p.add_argument("--model", required=True, choices=GARCH_MODELS)
    p.add_argument("--dist", default="normal", choices=sorted(est.DIST_KINDS))
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("forecast", help="variance forecasts from a fitted model")
    common_io(p)
    p.add_argument("--split", help="fit on dates <= this boundary")
    p.add_argument("--model", required=True, choices=GARCH_MODELS)
    p.add_argument("--dist", default="skewt", choices=sorted(est.DIST_KINDS))
    p.add_argument("--horizon", type=int, default=10)
    common_out(p)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("train-lstm", help="train the stacked LSTM and write the container")
    common_io(p)
    p.add_argument("--split", required=True, help="train/test boundary (YYYY-MM-DD)")
    p.add_argument("--target", default="return", choices=nn.TARGETS)
    p.add_argument("--window", type=int, default=10, help="realized-vol window (days)")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    common_out(p)
    p.set_defaults(func=cmd_train_lstm)

    p = sub.add_parser("backtest", help="rolling-window evaluation, train and test spans")
    common_io(p)
    p.add_argument("--split", required=True, help="train/test boundary (YYYY-MM-DD)")
    p.add_argument("--model", required=True, choices=GARCH_MODELS + ("lstm",))
    p.add_argument("--dist", default="skewt", choices=sorted(est.DIST_KINDS))
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--target", default="return", choices=nn.TARGETS)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    common_out(p)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("compare", help="rank backtest reports per sector and units")
    p.add_argument("--out", default="out", help="directory holding backtest outputs")
    p.set_defaults(func=cmd_compare)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
