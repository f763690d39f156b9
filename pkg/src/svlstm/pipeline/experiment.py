"""Rolling-window experiment runs for the SV, LSTM and hybrid models."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError, SvLstmError
from ..evaluation import point_metrics
from ..marketdata import (
    PriceSeries,
    format_float,
    load_prices,
    log_returns,
    read_series_csv,
    rolling_volatility,
    write_json,
)
from ..neuralnet import (
    FINAL,
    TUNING,
    Dataset,
    HyperParams,
    HyperSpace,
    TrainSettings,
    init_network,
    predict,
    random_search,
    train,
)
from ..svmodel import SvForecast, rolling_sv_forecast
from .features import VOL_COL, FeatureMatrix, Window, WindowPlan, assemble_hybrid_features, make_sequences, split_windows
from .scalers import KINDS, Scaler, fit_scaler, inverse_transform, transform

log = logging.getLogger(__name__)

MODELS = ("sv", "lstm", "hybrid")
LOOKBACKS = (5, 21, 42)
PLAN_LOSSES = ("mse", "mae", "madl")


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything that determines a run.

    ``loss`` pins the training loss of every trial; ``None`` lets the search
    draw it from ``space``. ``hyperparams`` skips tuning altogether.
    ``sv_forecasts_path`` reuses a saved SV forecast series instead of
    refitting it.
    """

    model: str = "hybrid"
    lookback: int = 21
    scaler: str = "minmax"
    loss: str | None = "mse"
    windows: WindowPlan = WindowPlan()
    seed: int = 0
    n_trials: int = 25
    executions_per_trial: int = 3
    tuning: TrainSettings = TUNING
    final: TrainSettings = FINAL
    space: HyperSpace = HyperSpace()
    hyperparams: HyperParams | None = None
    vol_window: int = 21
    sv_train_len: int = 504
    sv_n_iter: int = 1000
    sv_n_burnin: int = 200
    sv_forecasts_path: str | None = None
    n_jobs: int = 1

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError("invalid experiment plan:\n  " + "\n  ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.model not in MODELS:
            out.append(f"model must be one of {MODELS}, got {self.model!r}")
        if not isinstance(self.lookback, int) or self.lookback < 1:
            out.append(f"lookback must be a positive integer, got {self.lookback!r}")
        elif self.lookback not in LOOKBACKS:
            log.warning("lookback %d is outside the studied values %s", self.lookback, LOOKBACKS)
        if self.scaler not in KINDS:
            out.append(f"scaler must be one of {KINDS}, got {self.scaler!r}")
        if self.loss is not None and self.loss not in PLAN_LOSSES:
            out.append(f"loss must be one of {PLAN_LOSSES}, got {self.loss!r}")
        if self.n_trials < 1 or self.executions_per_trial < 1:
            out.append("n_trials and executions_per_trial must be at least 1")
        if self.vol_window < 2:
            out.append("vol_window must be at least 2")
        if self.sv_train_len < 50:
            out.append("sv_train_len must be at least 50")
        if not 0 <= self.sv_n_burnin < self.sv_n_iter:
            out.append("sv_n_burnin must be in [0, sv_n_iter)")
        if self.lookback >= min(self.windows.train_days, self.windows.val_days):
            out.append("lookback must be shorter than both the train and validation spans")
        if self.sv_train_len <= self.vol_window:
            out.append("sv_train_len must exceed vol_window")
        return out

    def to_dict(self) -> dict:
        out = asdict(self)
        out["space"] = self.space.to_dict()
        out["hyperparams"] = None if self.hyperparams is None else self.hyperparams.to_dict()
        return out


def stream_seed(seed: int, window: int, purpose: int) -> int:
    """Independent 32-bit seed for one (window, purpose) pair."""
    return int(np.random.SeedSequence([int(seed), int(window), int(purpose)]).generate_state(1)[0])


SEARCH_STREAM, INIT_STREAM, TRAIN_STREAM = 1, 2, 3


@dataclass
class WindowResult:
    window: Window
    dates: np.ndarray
    y_true: np.ndarray
    y_pred: np.ndarray
    report: dict
    hyperparams: HyperParams | None = None
    scaler_tuning: Scaler | None = None
    scaler_final: Scaler | None = None
    weights: list = field(default_factory=list)
    train_log: list = field(default_factory=list)


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    dates: np.ndarray
    y_true: np.ndarray
    y_pred: np.ndarray
    windows: list


def _scaled(fm: FeatureMatrix, s: Scaler, vol_index: int) -> FeatureMatrix:
    return FeatureMatrix(fm.dates, fm.columns, transform(s, fm.values),
                         transform(s.column(vol_index), fm.target), fm.target_dates)


def _dataset(fm: FeatureMatrix, start: int, stop: int, lookback: int, vol_index: int) -> Dataset:
    """Sequences whose targets are rows ``start .. stop-1`` (inputs reach back ``lookback`` rows)."""
    inputs, targets, _ = make_sequences(fm.rows(start - lookback, stop), lookback)
    return Dataset(inputs, targets, inputs[:, -1, vol_index])


def _range_dates(fm: FeatureMatrix, r: range) -> list[str]:
    return [str(fm.dates[r.start]), str(fm.dates[r.stop - 1])]


def load_sv_forecasts(path) -> list[SvForecast]:
    dates, values = read_series_csv(path, "median_vol")
    return [SvForecast(d, float(v)) for d, v in zip(dates, values)]


def write_sv_forecasts(path, forecasts) -> None:
    """``date,median_vol`` plus one ``qNN`` column per requested quantile level."""
    levels = sorted(forecasts[0].quantiles) if forecasts else []
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "median_vol", *(f"q{round(100 * q):02d}" for q in levels)])
        for f in forecasts:
            writer.writerow([str(f.date), format_float(f.median_vol), *(format_float(f.quantiles[q]) for q in levels)])


def build_features(plan: ExperimentPlan, prices: PriceSeries, sv=None) -> tuple[FeatureMatrix, list | None]:
    """Feature matrix for ``plan.model``.

    All three models share the same row span: the LSTM matrix is trimmed to
    start where the first SV forecast becomes available.
    """
    returns = log_returns(prices)
    vol = rolling_volatility(returns, plan.vol_window)
    if len(returns) <= plan.sv_train_len:
        raise DataError(f"{len(returns)} returns cannot cover the {plan.sv_train_len}-day SV fitting window")
    if plan.model == "lstm":
        fm = assemble_hybrid_features(returns, vol).from_date(returns.dates[plan.sv_train_len - 1])
        return fm, None
    if sv is None and plan.sv_forecasts_path:
        sv = load_sv_forecasts(plan.sv_forecasts_path)
    if sv is None:
        log.info("fitting %d rolling SV models", len(returns) - plan.sv_train_len)
        sv = rolling_sv_forecast(returns, plan.sv_train_len, plan.sv_n_iter, plan.sv_n_burnin,
                                 seed=plan.seed, n_jobs=plan.n_jobs, progress=True)
    return assemble_hybrid_features(returns, vol, sv), sv


def _run_sv_window(plan, fm: FeatureMatrix, w: Window) -> WindowResult:
    rows = slice(w.test.start - 1, w.test.stop - 1)
    dates = fm.target_dates[rows].copy()
    y_true = fm.target[rows].copy()
    y_pred = fm.column("sv_forecast_t_plus_1")[rows].copy()
    report = {"model": "sv", "sv_train_len": plan.sv_train_len, "sv_n_iter": plan.sv_n_iter,
              "sv_n_burnin": plan.sv_n_burnin, "sv_seed": plan.seed}
    return WindowResult(w, dates, y_true, y_pred, report)


def _run_nn_window(plan, fm: FeatureMatrix, w: Window) -> WindowResult:
    L = plan.lookback
    vi = fm.columns.index(VOL_COL)
    if w.train.start + L >= w.train.stop:
        raise DataError("training range is shorter than the lookback")
    scaler_a = fit_scaler(plan.scaler, fm.values[w.train.start:w.val.stop])
    scaler_b = fit_scaler(plan.scaler, fm.values[w.train.start:w.train.stop])
    seeds = {
        "search": stream_seed(plan.seed, w.index, SEARCH_STREAM),
        "init": stream_seed(plan.seed, w.index, INIT_STREAM),
        "train": stream_seed(plan.seed, w.index, TRAIN_STREAM),
    }
    report = {"model": plan.model, "seeds": seeds}

    if plan.hyperparams is None:
        fa = _scaled(fm, scaler_a, vi)
        tune_train = _dataset(fa, w.train.start + L, w.train.stop, L, vi)
        tune_val = _dataset(fa, w.val.start, w.val.stop, L, vi)
        search = random_search(plan.space, tune_train, tune_val, plan.n_trials, plan.executions_per_trial,
                               seed=seeds["search"], settings=plan.tuning, loss_override=plan.loss)
        hp = search.best
        report["search"] = search.to_dict()
        report["tuned"] = True
    else:
        hp = plan.hyperparams
        if plan.loss is not None and hp.loss != plan.loss:
            hp = HyperParams.from_dict({**hp.to_dict(), "loss": plan.loss})
        report["tuned"] = False

    fb = _scaled(fm, scaler_b, vi)
    final_train = _dataset(fb, w.train.start + L, w.train.stop, L, vi)
    final_val = _dataset(fb, w.val.start, w.val.stop, L, vi)
    test = _dataset(fb, w.test.start, w.test.stop, L, vi)
    net = init_network(fm.values.shape[1], hp, np.random.default_rng(seeds["init"]))
    fit = train(net, final_train, final_val, plan.final.max_epochs, plan.final.patience,
                seed=seeds["train"], batch_size=plan.final.batch_size)
    y_pred = inverse_transform(scaler_b.column(vi), predict(net, test.inputs))

    rows = slice(w.test.start - 1, w.test.stop - 1)
    report.update({
        "final_training": fit.to_dict(),
        "scaler_tuning": scaler_a.params(),
        "scaler_final": scaler_b.params(),
        "n_sequences": {"train": len(final_train), "val": len(final_val), "test": len(test)},
    })
    return WindowResult(w, fm.target_dates[rows].copy(), fm.target[rows].copy(), y_pred, report,
                        hyperparams=hp, scaler_tuning=scaler_a, scaler_final=scaler_b,
                        weights=net.get_weights(), train_log=fit.rows())


def run_experiment(plan: ExperimentPlan, prices, out_dir=None, sv=None) -> ExperimentResult:
    """Run every window of ``plan`` on ``prices`` (a PriceSeries or a CSV path).

    Each window tunes (unless hyperparameters are pinned), refits on the
    training years, forecasts its test year and maps predictions back to
    volatility units. Test years are concatenated into one out-of-sample
    series. ``sv`` may supply precomputed SV forecasts.
    """
    if not isinstance(prices, PriceSeries):
        prices = load_prices(prices)
    fm, sv = build_features(plan, prices, sv)
    windows = split_windows(len(fm), plan.windows)
    log.info("%s: %d feature rows, %d windows", plan.model, len(fm), len(windows))
    results = []
    for w in windows:
        try:
            res = _run_sv_window(plan, fm, w) if plan.model == "sv" else _run_nn_window(plan, fm, w)
        except SvLstmError as exc:
            exc.args = (f"window {w.index}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            raise
        res.report.update({
            "window": w.index,
            "train_dates": _range_dates(fm, w.train),
            "val_dates": _range_dates(fm, w.val),
            "test_dates": [str(res.dates[0]), str(res.dates[-1])],
            "test_metrics": point_metrics(res.y_true, res.y_pred).to_dict(),
        })
        log.info("window %d test MSE %.4g", w.index, res.report["test_metrics"]["mse"])
        results.append(res)
    result = ExperimentResult(
        plan,
        np.concatenate([r.dates for r in results]),
        np.concatenate([r.y_true for r in results]),
        np.concatenate([r.y_pred for r in results]),
        results,
    )
    if out_dir is not None:
        write_outputs(result, out_dir, sv)
    return result


def write_forecasts(path, dates, y_true, y_pred) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "y_true", "y_pred"])
        for d, a, b in zip(dates, y_true, y_pred):
            writer.writerow([str(d), format_float(a), format_float(b)])


def read_forecasts(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    dates, y_true, y_pred = [], [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"date", "y_true", "y_pred"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected columns date,y_true,y_pred")
        for rec in reader:
            try:
                dates.append(np.datetime64(rec["date"].strip(), "D"))
                y_true.append(float(rec["y_true"]))
                y_pred.append(float(rec["y_pred"]))
            except (TypeError, ValueError, AttributeError):
                raise DataError(f"{path}:{reader.line_num}: malformed row") from None
    return np.array(dates, dtype="datetime64[D]"), np.array(y_true), np.array(y_pred)


def write_outputs(result: ExperimentResult, out_dir, sv=None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_forecasts(out / "forecasts.csv", result.dates, result.y_true, result.y_pred)
    if sv is not None and result.plan.sv_forecasts_path is None:
        write_sv_forecasts(out / "sv_forecasts.csv", sv)
    for r in result.windows:
        wdir = out / f"window_{r.window.index}"
        write_json(wdir / "report.json", r.report)
        hp = r.hyperparams.to_dict() if r.hyperparams is not None else {
            k: r.report[k] for k in ("model", "sv_train_len", "sv_n_iter", "sv_n_burnin")}
        write_json(wdir / "hyperparams.json", hp)
        if r.train_log:
            with (wdir / "train_log.csv").open("w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["epoch", "train_loss", "val_loss"])
                for epoch, tr, va in r.train_log:
                    writer.writerow([epoch, format_float(tr), format_float(va)])
