"""Feature assembly, sequence building and rolling-window geometry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from ..marketdata import ReturnSeries, VolSeries

RETURN_COL = "log_return"
VOL_COL = "rolling_vol_21"
SV_COL = "sv_forecast_t_plus_1"
TRADING_YEAR = 252


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Row t holds features known at the close of day t; ``target[t]`` is the rolling volatility of day t+1."""

    dates: np.ndarray
    columns: tuple
    values: np.ndarray
    target: np.ndarray
    target_dates: np.ndarray

    def __post_init__(self):
        n = len(self.dates)
        if self.values.shape != (n, len(self.columns)) or self.target.shape != (n,) or len(self.target_dates) != n:
            raise ValueError("feature matrix parts disagree on shape")

    def __len__(self) -> int:
        return len(self.dates)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def without(self, name: str) -> "FeatureMatrix":
        keep = [k for k, c in enumerate(self.columns) if c != name]
        return FeatureMatrix(self.dates, tuple(self.columns[k] for k in keep), self.values[:, keep],
                             self.target, self.target_dates)

    def rows(self, start: int, stop: int | None = None) -> "FeatureMatrix":
        s = slice(start, stop)
        return FeatureMatrix(self.dates[s], self.columns, self.values[s], self.target[s], self.target_dates[s])

    def from_date(self, first: np.datetime64) -> "FeatureMatrix":
        return self.rows(int(np.searchsorted(self.dates, np.datetime64(first, "D"))))


def assemble_hybrid_features(returns: ReturnSeries, vol: VolSeries, sv=None) -> FeatureMatrix:
    """Join returns, rolling volatility and (optionally) next-day SV forecasts on date.

    The SV forecast whose date is t+1 is known at the close of t and joins
    row t. Rows missing a component at the head are dropped; a gap after the
    first complete row is an error.
    """
    ret_index = {d: k for k, d in enumerate(returns.dates)}
    missing = [d for d in vol.dates if d not in ret_index]
    if missing:
        raise DataError(f"volatility date {missing[0]} has no matching return")
    if len(vol) < 2:
        raise DataError("need at least two volatility rows to form a next-day target")
    r = returns.returns[[ret_index[d] for d in vol.dates]]
    dates = vol.dates[:-1]
    target_dates = vol.dates[1:]
    target = vol.values[1:]
    cols = [r[:-1], vol.values[:-1]]
    names = [RETURN_COL, VOL_COL]
    if sv is not None:
        sv_map = {np.datetime64(f.date, "D"): f.median_vol for f in sv}
        present = np.array([d in sv_map for d in target_dates])
        if not present.any():
            raise DataError("SV forecasts do not overlap the volatility dates")
        first = int(np.argmax(present))
        if not present[first:].all():
            gap = target_dates[first:][~present[first:]][0]
            raise DataError(f"missing SV forecast for {gap}")
        dates, target_dates, target = dates[first:], target_dates[first:], target[first:]
        cols = [c[first:] for c in cols]
        cols.append(np.array([sv_map[d] for d in target_dates]))
        names.append(SV_COL)
    if len(dates) == 0:
        raise DataError("no overlapping rows between inputs")
    return FeatureMatrix(dates, tuple(names), np.column_stack(cols), target, target_dates)


def make_sequences(features: FeatureMatrix, lookback: int):
    """Sliding input blocks and their next-day targets.

    Block k covers rows k .. k+lookback-1; its target is the rolling
    volatility on the date of row k+lookback.
    """
    lookback = int(lookback)
    if lookback < 1:
        raise ValueError("lookback must be at least 1")
    n = len(features)
    if n < lookback + 1:
        raise DataError(f"need at least {lookback + 1} rows for lookback {lookback}, got {n}")
    inputs = np.lib.stride_tricks.sliding_window_view(features.values, lookback, axis=0)[: n - lookback]
    inputs = np.ascontiguousarray(np.swapaxes(inputs, 1, 2))
    last = np.arange(lookback - 1, n - 1)
    return inputs, features.target[last].copy(), features.target_dates[last].copy()


@dataclass(frozen=True)
class WindowPlan:
    train_days: int = 11 * TRADING_YEAR
    val_days: int = 3 * TRADING_YEAR
    test_days: int = TRADING_YEAR
    step_days: int = TRADING_YEAR

    def __post_init__(self):
        if min(self.train_days, self.val_days, self.test_days, self.step_days) <= 0:
            raise ValueError("window day counts must be positive")

    @property
    def span(self) -> int:
        return self.train_days + self.val_days + self.test_days

    def n_windows(self, n_rows: int) -> int:
        return 0 if n_rows < self.span else (n_rows - self.span) // self.step_days + 1


@dataclass(frozen=True)
class Window:
    index: int
    train: range
    val: range
    test: range

    @property
    def start(self) -> int:
        return self.train.start

    @property
    def stop(self) -> int:
        return self.test.stop


def split_windows(n_rows: int, plan: WindowPlan = WindowPlan()) -> list[Window]:
    if n_rows < plan.span:
        raise DataError(f"{n_rows} rows cannot hold one window of {plan.span} rows")
    out = []
    for k in range(plan.n_windows(n_rows)):
        s = k * plan.step_days
        a, b = s + plan.train_days, s + plan.train_days + plan.val_days
        out.append(Window(k, range(s, a), range(a, b), range(b, b + plan.test_days)))
    return out
