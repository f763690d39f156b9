"""Price ingestion, log returns, rolling volatility and descriptive statistics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateError


def _as_dates(dates) -> np.ndarray:
    return np.asarray(dates, dtype="datetime64[D]")


def _check_increasing(dates: np.ndarray) -> None:
    if dates.size > 1 and not np.all(dates[1:] > dates[:-1]):
        raise DataError("dates must be strictly increasing without duplicates")


@dataclass(frozen=True, eq=False)
class PriceSeries:
    dates: np.ndarray
    closes: np.ndarray

    def __post_init__(self):
        dates = _as_dates(self.dates)
        closes = np.asarray(self.closes, dtype=float)
        if dates.shape != closes.shape or dates.ndim != 1:
            raise DataError("dates and closes must be 1-d and of equal length")
        _check_increasing(dates)
        if not np.all(np.isfinite(closes)) or np.any(closes <= 0):
            raise DataError("non-positive price")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "closes", closes)

    def __len__(self) -> int:
        return self.closes.size


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    dates: np.ndarray
    returns: np.ndarray

    def __post_init__(self):
        dates = _as_dates(self.dates)
        returns = np.asarray(self.returns, dtype=float)
        if dates.shape != returns.shape or dates.ndim != 1:
            raise DataError("dates and returns must be 1-d and of equal length")
        _check_increasing(dates)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "returns", returns)

    def __len__(self) -> int:
        return self.returns.size

    def slice(self, start: int, stop: int) -> "ReturnSeries":
        return ReturnSeries(self.dates[start:stop], self.returns[start:stop])


@dataclass(frozen=True, eq=False)
class VolSeries:
    dates: np.ndarray
    values: np.ndarray
    window: int

    def __post_init__(self):
        dates = _as_dates(self.dates)
        values = np.asarray(self.values, dtype=float)
        if dates.shape != values.shape or dates.ndim != 1:
            raise DataError("dates and values must be 1-d and of equal length")
        _check_increasing(dates)
        if np.any(values < 0):
            raise DataError("volatility values must be non-negative")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class DescriptiveStats:
    mean: float
    median: float
    std_dev: float
    min: float
    max: float
    skewness: float
    excess_kurtosis: float

    def to_dict(self) -> dict:
        return asdict(self)


def load_prices(path, date_column: str = "date", close_column: str = "close") -> PriceSeries:
    """Read a ``date,close`` CSV into a date-sorted :class:`PriceSeries`.

    Rows may appear in any order. Duplicate dates, unparseable rows and
    non-positive prices raise :class:`DataError` naming the offending line.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    rows = []
    seen = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for col in (date_column, close_column):
            if col not in fields:
                raise DataError(f"{path}: missing column {col!r}")
        for record in reader:
            line = reader.line_num
            raw_date, raw_close = record.get(date_column), record.get(close_column)
            try:
                day = np.datetime64(str(raw_date).strip(), "D")
                close = float(raw_close)
            except (TypeError, ValueError):
                raise DataError(f"{path}:{line}: malformed row") from None
            if not math.isfinite(close) or close <= 0:
                raise DataError(f"{path}:{line}: non-positive price {raw_close!r}")
            if day in seen:
                raise DataError(f"{path}:{line}: duplicate date {day} (first seen on line {seen[day]})")
            seen[day] = line
            rows.append((day, close))
    if not rows:
        raise DataError(f"{path}: no data rows")
    rows.sort(key=lambda r: r[0])
    return PriceSeries(np.array([r[0] for r in rows]), np.array([r[1] for r in rows]))


def log_returns(prices: PriceSeries) -> ReturnSeries:
    if len(prices) < 2:
        raise DataError("need at least 2 prices to form a return")
    c = prices.closes
    return ReturnSeries(prices.dates[1:], np.log(c[1:] / c[:-1]))


def rolling_mean(returns: ReturnSeries, window: int = 21) -> tuple[np.ndarray, np.ndarray]:
    """Trailing mean of ``window`` returns, dated like :func:`rolling_volatility`."""
    window = int(window)
    if window < 1 or returns.returns.size < window:
        raise DataError(f"cannot form a {window}-day mean from {returns.returns.size} returns")
    blocks = np.lib.stride_tricks.sliding_window_view(returns.returns, window)
    return returns.dates[window - 1:], blocks.mean(axis=1)


def rolling_volatility(returns: ReturnSeries, window: int = 21) -> VolSeries:
    """Trailing sample standard deviation (ddof=1) of ``window`` returns.

    The value dated t covers returns t-window+1 .. t, so the first output is
    dated at return index ``window - 1``.
    """
    window = int(window)
    if window < 2:
        raise DataError("rolling window must be at least 2")
    r = returns.returns
    if r.size < window:
        raise DataError(f"series of length {r.size} shorter than window {window}")
    blocks = np.lib.stride_tricks.sliding_window_view(r, window)
    centred = blocks - blocks.mean(axis=1, keepdims=True)
    values = np.sqrt(np.einsum("ij,ij->i", centred, centred) / (window - 1))
    return VolSeries(returns.dates[window - 1:], values, window)


def describe(x) -> DescriptiveStats:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise DataError("describe needs a 1-d sample of length >= 2")
    mean = float(x.mean())
    dev = x - mean
    m2 = float(np.mean(dev**2))
    if m2 == 0.0:
        raise DegenerateError("constant series: skewness and kurtosis are undefined")
    m3 = float(np.mean(dev**3))
    m4 = float(np.mean(dev**4))
    return DescriptiveStats(
        mean=mean,
        median=float(np.median(x)),
        std_dev=float(np.std(x, ddof=1)),
        min=float(x.min()),
        max=float(x.max()),
        skewness=m3 / m2**1.5,
        excess_kurtosis=m4 / m2**2 - 3.0,
    )


def format_float(value: float) -> str:
    """Shortest round-trip decimal text for a float."""
    return repr(float(value))


def write_series_csv(path, dates, values, header=("date", "value")) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for d, v in zip(_as_dates(dates), np.asarray(values, dtype=float)):
            writer.writerow([str(d), format_float(v)])


def read_series_csv(path, value_column: str = "value") -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    dates, values = [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if "date" not in (reader.fieldnames or []) or value_column not in reader.fieldnames:
            raise DataError(f"{path}: expected columns 'date' and {value_column!r}")
        for record in reader:
            try:
                dates.append(np.datetime64(record["date"].strip(), "D"))
                values.append(float(record[value_column]))
            except (TypeError, ValueError, AttributeError):
                raise DataError(f"{path}:{reader.line_num}: malformed row") from None
    return _as_dates(dates), np.asarray(values, dtype=float)


def write_json(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")
