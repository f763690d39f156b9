"""Command-line entry point: ``svlstm {data,forecast,compare,backtest}``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from dataclasses import fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import (
    BENCHMARKS,
    benchmark,
    load_futures,
    make_signals,
    simulate,
    strategy_stats,
)
from .errors import ConfigError, DataError, NumericError, SvLstmError
from .evaluation import comparison_report
from .marketdata import (
    VolSeries,
    describe,
    load_prices,
    log_returns,
    rolling_volatility,
    write_json,
    write_series_csv,
)
from .neuralnet import HyperParams, HyperSpace, TrainSettings
from .pipeline import ExperimentPlan, WindowPlan, read_forecasts, run_experiment

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("svlstm")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- config


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _resolve(base: Path, value):
    if value is None:
        return None
    p = Path(value)
    return str(p if p.is_absolute() else base / p)


def _section(cfg: dict, name: str, errors: list) -> dict:
    value = cfg.get(name, {})
    if not isinstance(value, dict):
        errors.append(f"[{name}] must be a table")
        return {}
    return value


def _build(cls, data: dict, where: str, errors: list):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        errors.append(f"[{where}] unknown key(s): {', '.join(unknown)}")
        data = {k: v for k, v in data.items() if k in known}
    try:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})
    except (TypeError, ValueError) as exc:
        errors.append(f"[{where}] {exc}")
        return None


EXPERIMENT_KEYS = {
    "model", "lookback", "scaler", "loss", "seed", "n_trials", "executions_per_trial", "vol_window",
    "sv_train_len", "sv_n_iter", "sv_n_burnin", "sv_forecasts", "n_jobs",
}


def plan_from_config(cfg: dict, base_dir=".", overrides=None) -> tuple[ExperimentPlan, dict]:
    """Validate a forecast config and return the plan plus resolved paths.

    Every problem found is reported together in a single ConfigError.
    """
    base = Path(base_dir)
    errors = []
    known_sections = {"data", "experiment", "windows", "tuning", "final", "space", "hyperparams", "output"}
    extra = sorted(set(cfg) - known_sections)
    if extra:
        errors.append(f"unknown section(s): {', '.join(extra)}")
    data = _section(cfg, "data", errors)
    exp = dict(_section(cfg, "experiment", errors))
    out = _section(cfg, "output", errors)
    for k, v in (overrides or {}).items():
        if v is not None:
            exp[k] = v
    unknown = sorted(set(exp) - EXPERIMENT_KEYS)
    if unknown:
        errors.append(f"[experiment] unknown key(s): {', '.join(unknown)}")
    prices = _resolve(base, data.get("prices"))
    if prices is None:
        errors.append("[data] prices is required")
    elif not Path(prices).exists():
        errors.append(f"[data] prices file not found: {prices}")
    sv_path = _resolve(base, exp.get("sv_forecasts"))
    if sv_path is not None and not Path(sv_path).exists():
        errors.append(f"[experiment] sv_forecasts file not found: {sv_path}")

    windows = _build(WindowPlan, _section(cfg, "windows", errors), "windows", errors)
    tuning = _build(TrainSettings, {**_default_settings("tuning"), **_section(cfg, "tuning", errors)}, "tuning", errors)
    final = _build(TrainSettings, {**_default_settings("final"), **_section(cfg, "final", errors)}, "final", errors)
    space = _build(HyperSpace, _section(cfg, "space", errors), "space", errors)
    hp = None
    if "hyperparams" in cfg:
        hp = _build(HyperParams, _section(cfg, "hyperparams", errors), "hyperparams", errors)

    kwargs = {k: v for k, v in exp.items() if k in EXPERIMENT_KEYS and k != "sv_forecasts"}
    if isinstance(kwargs.get("loss"), str) and kwargs["loss"] == "tuned":
        kwargs["loss"] = None
    for k in ("lookback", "seed", "n_trials", "executions_per_trial", "vol_window", "sv_train_len",
              "sv_n_iter", "sv_n_burnin", "n_jobs"):
        if k in kwargs and (isinstance(kwargs[k], bool) or not isinstance(kwargs[k], int)):
            errors.append(f"[experiment] {k} must be an integer, got {kwargs[k]!r}")
            kwargs.pop(k)
    plan = None
    if not errors:
        try:
            plan = ExperimentPlan(windows=windows, tuning=tuning, final=final, space=space,
                                  hyperparams=hp, sv_forecasts_path=sv_path, **kwargs)
        except ConfigError as exc:
            errors.extend(line.strip() for line in str(exc).splitlines()[1:])
        except (TypeError, ValueError) as exc:
            errors.append(str(exc))
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    return plan, {"prices": prices, "out": _resolve(base, out.get("dir"))}


def _default_settings(which: str) -> dict:
    from .neuralnet import FINAL, TUNING

    s = TUNING if which == "tuning" else FINAL
    return {"max_epochs": s.max_epochs, "patience": s.patience, "batch_size": s.batch_size}


# ---------------------------------------------------------------- manifest


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir, command: str, settings: dict, inputs: dict, seeds: dict, started: str) -> dict:
    canonical = json.dumps(settings, sort_keys=True, default=str)
    import scipy

    manifest = {
        "command": command,
        "config_hash": hashlib.sha256(canonical.encode()).hexdigest(),
        "settings": json.loads(canonical),
        "seeds": seeds,
        "versions": {"svlstm": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "inputs": {name: {"path": str(p), "sha256": file_digest(p)} for name, p in inputs.items() if p},
        "started": started,
        "finished": _now(),
    }
    write_json(Path(out_dir) / "manifest.json", manifest)
    return manifest


def _merged(args, cfg_section: dict, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    return cfg_section.get(key, default)


def _command_config(args, name: str) -> tuple[dict, Path]:
    if getattr(args, "config", None) is None:
        return {}, Path(".")
    cfg = load_config(args.config)
    section = cfg.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"[{name}] must be a table")
    return section, Path(args.config).parent


# ---------------------------------------------------------------- commands


def cmd_data(args) -> int:
    started = _now()
    cfg, base = _command_config(args, "data")
    prices_path = args.prices or _resolve(base, cfg.get("prices"))
    if prices_path is None:
        raise ConfigError("data: a prices file is required")
    out = Path(_merged(args, cfg, "out", "data_out"))
    window = int(_merged(args, cfg, "window", 21))
    prices = load_prices(prices_path, _merged(args, cfg, "date_column", "date"),
                         _merged(args, cfg, "close_column", "close"))
    returns = log_returns(prices)
    vol = rolling_volatility(returns, window)
    write_series_csv(out / "returns.csv", returns.dates, returns.returns, ("date", "log_return"))
    write_series_csv(out / "volatility.csv", vol.dates, vol.values, ("date", f"rolling_vol_{window}"))
    write_json(out / "stats.json", {
        "prices": {"n": len(prices), "first_date": str(prices.dates[0]), "last_date": str(prices.dates[-1])},
        "log_returns": describe(returns.returns).to_dict(),
        f"rolling_vol_{window}": describe(vol.values).to_dict(),
    })
    write_manifest(out, "data", {"window": window}, {"prices": prices_path}, {}, started)
    print(f"wrote {len(returns)} returns and {len(vol)} volatility rows to {out}")
    return EXIT_OK


def cmd_forecast(args) -> int:
    started = _now()
    cfg = load_config(args.config)
    overrides = {"seed": args.seed, "model": args.model}
    if args.sv_forecasts is not None:
        overrides["sv_forecasts"] = str(Path(args.sv_forecasts).resolve())
    plan, paths = plan_from_config(cfg, Path(args.config).parent, overrides)
    out = Path(args.out or paths["out"] or "run")
    result = run_experiment(plan, paths["prices"], out)
    inputs = {"prices": paths["prices"], "config": args.config}
    if plan.sv_forecasts_path:
        inputs["sv_forecasts"] = plan.sv_forecasts_path
    seeds = {"seed": plan.seed}
    seeds.update({f"window_{r.window.index}": r.report.get("seeds", {}) for r in result.windows})
    write_manifest(out, "forecast", plan.to_dict(), inputs, seeds, started)
    print(f"{plan.model}: {len(result.dates)} out-of-sample forecasts over {len(result.windows)} windows -> {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    started = _now()
    cfg, base = _command_config(args, "compare")
    files = args.forecasts or [_resolve(base, f) for f in cfg.get("forecasts", [])]
    if len(files) < 2:
        raise ConfigError("compare: need at least two forecast files")
    names = args.names or cfg.get("names") or [Path(f).parent.name or Path(f).stem for f in files]
    if len(names) != len(files) or len(set(names)) != len(names):
        raise ConfigError("compare: need one distinct name per forecast file")
    loaded = [read_forecasts(f) for f in files]
    dates, y_true, _ = loaded[0]
    for name, (d, y, _) in zip(names[1:], loaded[1:]):
        if d.shape != dates.shape or not np.array_equal(d, dates):
            n = min(d.size, dates.size)
            bad = np.flatnonzero(d[:n] != dates[:n])
            first = dates[bad[0]] if bad.size else (dates[n] if dates.size > n else d[n])
            raise DataError(f"compare: {name} is misaligned with {names[0]} starting at {first}")
        if not np.array_equal(y, y_true):
            k = int(np.flatnonzero(y != y_true)[0])
            raise DataError(f"compare: {name} has different actual values from {dates[k]}")
    report = comparison_report(dates, y_true, {n: p for n, (_, _, p) in zip(names, loaded)})
    out = Path(_merged(args, cfg, "out", "comparison.json"))
    write_json(out, report)
    write_manifest(out.parent, "compare", {"names": names}, {n: f for n, f in zip(names, files)}, {}, started)
    for row in report["comparisons"]:
        print(row["comparison"], "W", row["wilcoxon_W"], "DM(mse)", row["dm_mse"], "DM(mae)", row["dm_mae"])
    return EXIT_OK


def cmd_backtest(args) -> int:
    started = _now()
    cfg, base = _command_config(args, "backtest")
    forecast = args.forecast or _resolve(base, cfg.get("forecast"))
    futures_path = args.futures or _resolve(base, cfg.get("futures"))
    settle_path = args.settlements or _resolve(base, cfg.get("settlements"))
    if not (forecast and futures_path and settle_path):
        raise ConfigError("backtest: forecast, futures and settlements files are required")
    cost = float(_merged(args, cfg, "cost_rate", 0.001))
    alloc = float(_merged(args, cfg, "allocation", 0.25))
    capital = float(_merged(args, cfg, "initial_capital", 1000.0))
    with_benchmarks = bool(args.benchmarks or cfg.get("benchmarks", False))
    out = Path(_merged(args, cfg, "out", "backtest_out"))

    dates, y_true, y_pred = read_forecasts(forecast)
    signals = make_signals(VolSeries(dates, y_pred, 0), VolSeries(dates, y_true, 0))
    futures = load_futures(futures_path, settle_path)
    traded = futures.dates()
    missing = signals.dates[~np.isin(signals.dates, traded)]
    if missing.size:
        raise DataError(f"backtest: futures do not cover {missing[0]} .. {missing[-1]} "
                        f"({missing.size} signal dates without prices)")
    write_series_csv(out / "signals.csv", signals.dates, signals.signals, ("date", "signal"))
    ledgers = {"strategy": simulate(futures, signals, capital, alloc, cost)}
    if with_benchmarks:
        for kind in BENCHMARKS:
            ledgers[kind] = benchmark(kind, futures, capital, alloc, cost, dates=signals.dates)
    stats = {}
    for name, led in ledgers.items():
        led.write_csv(out / f"ledger_{name}.csv")
        entry = strategy_stats(led).to_dict() if len(led) >= 2 and not led.bankrupt else None
        stats[name] = {"stats": entry, "bankrupt": led.bankrupt, "final_equity": led.equity[-1],
                       "n_flips": led.n_flips(), "n_rolls": led.n_rolls()}
    write_json(out / "stats.json", stats)
    settings = {"cost_rate": cost, "allocation": alloc, "initial_capital": capital, "benchmarks": with_benchmarks}
    write_manifest(out, "backtest", settings,
                   {"forecast": forecast, "futures": futures_path, "settlements": settle_path}, {}, started)
    s = stats["strategy"]
    print(f"strategy final equity {s['final_equity']!r} after {len(ledgers['strategy'])} days -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="svlstm", description="Volatility forecasting with SV, LSTM and hybrid models.")
    p.add_argument("--version", action="version", version=f"svlstm {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("data", help="log returns, rolling volatility and descriptive statistics")
    d.add_argument("prices", nargs="?")
    d.add_argument("--config")
    d.add_argument("--out")
    d.add_argument("--window", type=int)
    d.add_argument("--date-column", dest="date_column")
    d.add_argument("--close-column", dest="close_column")
    d.set_defaults(func=cmd_data)

    f = sub.add_parser("forecast", help="run a rolling-window experiment from a TOML config")
    f.add_argument("config")
    f.add_argument("--out")
    f.add_argument("--seed", type=int)
    f.add_argument("--model", choices=("sv", "lstm", "hybrid"))
    f.add_argument("--sv-forecasts", dest="sv_forecasts", help="reuse a saved sv_forecasts.csv")
    f.set_defaults(func=cmd_forecast)

    c = sub.add_parser("compare", help="metrics and pairwise tests for aligned forecast files")
    c.add_argument("forecasts", nargs="*")
    c.add_argument("--names", nargs="+")
    c.add_argument("--config")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    b = sub.add_parser("backtest", help="trade VIX futures on forecast signals")
    b.add_argument("forecast", nargs="?")
    b.add_argument("--futures")
    b.add_argument("--settlements")
    b.add_argument("--config")
    b.add_argument("--out")
    b.add_argument("--cost-rate", dest="cost_rate", type=float)
    b.add_argument("--allocation", type=float)
    b.add_argument("--initial-capital", dest="initial_capital", type=float)
    b.add_argument("--benchmarks", action="store_true", default=None)
    b.set_defaults(func=cmd_backtest)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SvLstmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
