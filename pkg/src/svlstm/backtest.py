"""Volatility-signal trading on monthly VIX futures with rollover and costs."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .marketdata import VolSeries, format_float

TRADING_YEAR = 252


@dataclass(frozen=True, eq=False)
class FuturesSeries:
    """Daily closes per contract plus each contract's expiration and settlement."""

    trade_dates: np.ndarray
    symbols: np.ndarray
    closes: np.ndarray
    settlements: dict

    def __post_init__(self):
        dates = np.asarray(self.trade_dates, dtype="datetime64[D]")
        symbols = np.asarray(self.symbols, dtype=str)
        closes = np.asarray(self.closes, dtype=float)
        if not dates.shape == symbols.shape == closes.shape:
            raise DataError("futures columns differ in length")
        if not np.all(np.isfinite(closes)) or np.any(closes <= 0):
            raise DataError("futures prices must be positive")
        settlements = {}
        for sym, (exp, price) in self.settlements.items():
            if not price > 0:
                raise DataError(f"settlement price of {sym} must be positive")
            settlements[str(sym)] = (np.datetime64(exp, "D"), float(price))
        for sym in np.unique(symbols):
            if sym not in settlements:
                raise DataError(f"no settlement record for {sym}")
        object.__setattr__(self, "trade_dates", dates)
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "closes", closes)
        object.__setattr__(self, "settlements", settlements)
        if np.any(self.days_to_expiry() < 0):
            k = int(np.argmin(self.days_to_expiry()))
            raise DataError(f"{symbols[k]} trades on {dates[k]} after its expiration")
        index = {}
        for k, key in enumerate(zip(dates.tolist(), symbols.tolist())):
            if key in index:
                raise DataError(f"duplicate price for {key[1]} on {key[0]}")
            index[key] = k
        object.__setattr__(self, "_index", index)
        order = sorted(settlements.items(), key=lambda kv: kv[1][0])
        object.__setattr__(self, "_by_expiry", order)

    def days_to_expiry(self) -> np.ndarray:
        exp = np.array([self.settlements[s][0] for s in self.symbols], dtype="datetime64[D]")
        return (exp - self.trade_dates).astype(int)

    def dates(self) -> np.ndarray:
        return np.unique(self.trade_dates)

    def close(self, symbol: str, date) -> float:
        k = self._index.get((np.datetime64(date, "D").tolist(), symbol))
        if k is None:
            raise DataError(f"missing price for {symbol} on {np.datetime64(date, 'D')}")
        return float(self.closes[k])

    def expiration(self, symbol: str) -> np.datetime64:
        return self.settlements[symbol][0]

    def settlement(self, symbol: str) -> float:
        return self.settlements[symbol][1]

    def front(self, date) -> str:
        """Nearest contract expiring strictly after ``date``."""
        date = np.datetime64(date, "D")
        for sym, (exp, _) in self._by_expiry:
            if exp > date:
                return sym
        raise DataError(f"no unexpired contract after {date}")

    def last_expiration(self) -> np.datetime64:
        return self._by_expiry[-1][1][0]


def _read_csv(path, required):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(required) - set(reader.fieldnames or [])
        if missing:
            raise DataError(f"{path}: missing column(s) {sorted(missing)}")
        for rec in reader:
            yield path, reader.line_num, rec


def load_futures(futures_path, settlements_path) -> FuturesSeries:
    """Read ``trade_date,symbol,close`` and ``symbol,expiration_date,settlement_price`` files."""
    dates, symbols, closes = [], [], []
    for path, line, rec in _read_csv(futures_path, ("trade_date", "symbol", "close")):
        try:
            dates.append(np.datetime64(rec["trade_date"].strip(), "D"))
            symbols.append(rec["symbol"].strip())
            closes.append(float(rec["close"]))
        except (TypeError, ValueError, AttributeError):
            raise DataError(f"{path}:{line}: malformed futures row") from None
    settlements = {}
    for path, line, rec in _read_csv(settlements_path, ("symbol", "expiration_date", "settlement_price")):
        try:
            sym = rec["symbol"].strip()
            settlements[sym] = (np.datetime64(rec["expiration_date"].strip(), "D"), float(rec["settlement_price"]))
        except (TypeError, ValueError, AttributeError):
            raise DataError(f"{path}:{line}: malformed settlement row") from None
    return FuturesSeries(np.array(dates, dtype="datetime64[D]"), np.array(symbols, dtype=str),
                         np.array(closes), settlements)


@dataclass(frozen=True, eq=False)
class SignalSeries:
    dates: np.ndarray
    signals: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        signals = np.asarray(self.signals, dtype=int)
        if dates.shape != signals.shape or dates.size == 0:
            raise DataError("signals need one value per date")
        if not np.all(np.isin(signals, (-1, 1))):
            raise DataError("signals must be +1 or -1")
        if dates.size > 1 and not np.all(dates[1:] > dates[:-1]):
            raise DataError("signal dates must be strictly increasing")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "signals", signals)

    def __len__(self) -> int:
        return self.dates.size


def make_signals(forecast: VolSeries, actual: VolSeries) -> SignalSeries:
    """Long when tomorrow's forecast exceeds today's volatility, short when below.

    ``forecast`` is dated by the day it predicts. The signal for day t pairs
    the forecast dated t+1 with the actual value at t, where t+1 is the next
    date of ``actual``. Ties keep the previous signal and the first day
    defaults to short.
    """
    pos = {d: k for k, d in enumerate(actual.dates.tolist())}
    dates, diffs = [], []
    for d, f in zip(forecast.dates.tolist(), forecast.values):
        k = pos.get(d)
        if k is None:
            raise DataError(f"forecast date {d} is not a date of the actual series")
        if k == 0:
            continue
        dates.append(actual.dates[k - 1])
        diffs.append(f - actual.values[k - 1])
    if not dates:
        raise DataError("forecast and actual series do not overlap")
    signals = np.empty(len(diffs), dtype=int)
    prev = -1
    for k, d in enumerate(diffs):
        if d > 0:
            prev = 1
        elif d < 0:
            prev = -1
        signals[k] = prev
    return SignalSeries(np.array(dates, dtype="datetime64[D]"), signals)


@dataclass
class TradeLedger:
    dates: list = field(default_factory=list)
    symbols: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    entry_prices: list = field(default_factory=list)
    exit_prices: list = field(default_factory=list)
    daily_returns: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    equity: list = field(default_factory=list)
    rolled: list = field(default_factory=list)
    flipped: list = field(default_factory=list)
    cost_events: list = field(default_factory=list)
    bankrupt: bool = False
    allocation: float = 0.25
    cost_rate: float = 0.001

    def __len__(self) -> int:
        return len(self.dates)

    def strategy_returns(self) -> np.ndarray:
        e = np.asarray(self.equity)
        return e[1:] / e[:-1] - 1.0

    def n_flips(self) -> int:
        return int(sum(self.flipped))

    def n_rolls(self) -> int:
        return int(sum(self.rolled))

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        cols = ("date", "symbol", "position", "entry_price", "exit_price", "daily_return",
                "cost_paid", "equity", "rolled", "flipped", "cost_events")
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for k in range(len(self)):
                exit_price = self.exit_prices[k]
                w.writerow([
                    str(self.dates[k]), self.symbols[k], self.positions[k],
                    format_float(self.entry_prices[k]),
                    "" if exit_price is None else format_float(exit_price),
                    format_float(self.daily_returns[k]), format_float(self.costs[k]),
                    format_float(self.equity[k]), int(self.rolled[k]), int(self.flipped[k]),
                    self.cost_events[k],
                ])


def simulate(
    futures: FuturesSeries,
    signals: SignalSeries,
    initial_capital: float = 1000.0,
    allocation: float = 0.25,
    cost_rate: float = 0.001,
) -> TradeLedger:
    """Trade the front-month contract in the direction of each day's signal.

    Positions are taken at the close. Each day the held contract returns
    ``position * (exit / previous - 1)``, where exit is the close, or the
    settlement price on the contract's expiration date. Equity earns that
    return on ``allocation`` of itself (rebalanced daily). On expiration the
    position rolls into the next contract at its close; on a signal change it
    is closed and reopened. Each leg of a roll or flip costs
    ``cost_rate * allocation * equity`` measured before costs. The opening
    trade and the final mark carry no cost.
    """
    if not initial_capital > 0 or not 0 < allocation <= 1 or cost_rate < 0:
        raise ValueError("need positive capital, allocation in (0, 1] and non-negative cost rate")
    led = TradeLedger(allocation=allocation, cost_rate=cost_rate)
    dates = signals.dates
    position = int(signals.signals[0])
    symbol = futures.front(dates[0])
    prev = futures.close(symbol, dates[0])
    equity = float(initial_capital)
    led.dates.append(dates[0])
    led.symbols.append(symbol)
    led.positions.append(position)
    led.entry_prices.append(prev)
    led.exit_prices.append(None)
    led.daily_returns.append(0.0)
    led.costs.append(0.0)
    led.equity.append(equity)
    led.rolled.append(False)
    led.flipped.append(False)
    led.cost_events.append(0)
    for d, signal in zip(dates[1:], signals.signals[1:]):
        held, basis = symbol, prev
        expiring = futures.expiration(symbol) == d
        exit_price = futures.settlement(symbol) if expiring else futures.close(symbol, d)
        ret = position * (exit_price / basis - 1.0)
        gross = equity * (1.0 + allocation * ret)
        legs = 0
        if expiring:
            symbol = futures.front(d)
            legs += 2
        prev = futures.close(symbol, d)
        flipped = int(signal) != position
        if flipped:
            position = int(signal)
            legs += 2
        cost = legs * cost_rate * allocation * gross
        equity = gross - cost
        led.dates.append(d)
        led.symbols.append(held)
        led.positions.append(position)
        led.entry_prices.append(basis)
        led.exit_prices.append(exit_price)
        led.daily_returns.append(ret)
        led.costs.append(cost)
        led.equity.append(equity)
        led.rolled.append(bool(expiring))
        led.flipped.append(flipped)
        led.cost_events.append(legs)
        if not equity > 0:
            led.bankrupt = True
            break
    return led


BENCHMARKS = {"long_only": 1, "short_only": -1}


def benchmark_dates(futures: FuturesSeries) -> np.ndarray:
    """Trade dates before the last listed expiration (a roll target always exists)."""
    d = futures.dates()
    return d[d < futures.last_expiration()]


def benchmark(
    kind: str,
    futures: FuturesSeries,
    initial_capital: float = 1000.0,
    allocation: float = 0.25,
    cost_rate: float = 0.001,
    dates=None,
) -> TradeLedger:
    if kind not in BENCHMARKS:
        raise ValueError(f"unknown benchmark {kind!r}; expected one of {sorted(BENCHMARKS)}")
    dates = benchmark_dates(futures) if dates is None else np.asarray(dates, dtype="datetime64[D]")
    signals = SignalSeries(dates, np.full(dates.size, BENCHMARKS[kind]))
    return simulate(futures, signals, initial_capital, allocation, cost_rate)


@dataclass(frozen=True)
class StrategyStats:
    """Performance figures in percent; ratios are None where undefined."""

    arc_percent: float
    asd_percent: float
    sharpe: float | None
    max_drawdown_percent: float
    calmar: float | None
    total_return_percent: float
    n_days: int

    def to_dict(self) -> dict:
        return asdict(self)


def strategy_stats(ledger_or_equity) -> StrategyStats:
    equity = np.asarray(ledger_or_equity.equity if isinstance(ledger_or_equity, TradeLedger)
                        else ledger_or_equity, dtype=float)
    if equity.size < 2:
        raise DataError("need at least two equity points")
    if not np.all(equity > 0):
        raise DataError("equity must stay positive to compute compound statistics")
    growth = equity[-1] / equity[0]
    arc = growth ** (TRADING_YEAR / (equity.size - 1)) - 1.0
    daily = equity[1:] / equity[:-1] - 1.0
    asd = float(np.std(daily, ddof=1)) * math.sqrt(TRADING_YEAR) if daily.size > 1 else 0.0
    mdd = float(np.min(equity / np.maximum.accumulate(equity) - 1.0))
    return StrategyStats(
        arc_percent=100.0 * arc,
        asd_percent=100.0 * asd,
        sharpe=arc / asd if asd > 0 else None,
        max_drawdown_percent=100.0 * mdd,
        calmar=arc / abs(mdd) if mdd < 0 else None,
        total_return_percent=100.0 * (growth - 1.0),
        n_days=int(equity.size),
    )
