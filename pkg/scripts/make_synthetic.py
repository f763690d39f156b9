"""Write synthetic index prices and a VIX-style futures strip for smoke runs."""

import argparse
import csv
from pathlib import Path

import numpy as np

from svlstm.svmodel import simulate_sv


def business_days(start: str, n: int) -> np.ndarray:
    days = np.arange(np.datetime64(start, "D"), np.datetime64(start, "D") + 2 * n)
    return days[np.is_busday(days)][:n]


def write_prices(path: Path, n_rows: int, seed: int) -> np.ndarray:
    r, _ = simulate_sv(n_rows - 1, mu=-9.5, phi=0.98, sigma_eta=0.15, seed=seed)
    closes = 1000.0 * np.exp(np.concatenate([[0.0], np.cumsum(r + 2e-4)]))
    dates = business_days("2000-01-03", n_rows)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "close"])
        for d, c in zip(dates, closes):
            w.writerow([str(d), repr(float(c))])
    return dates


def write_futures(futures_path: Path, settle_path: Path, dates: np.ndarray, seed: int) -> None:
    """Monthly contracts expiring on the third Wednesday, each listed for about 60 trading days."""
    rng = np.random.default_rng(seed)
    spot = 18 * np.exp(np.cumsum(rng.normal(0, 0.04, dates.size)) * 0.3)
    months = np.unique(dates.astype("datetime64[M]"))
    expiries = []
    for m in months:
        first = m.astype("datetime64[D]")
        exp = np.busday_offset(first, 2, roll="forward", weekmask="Wed")
        if dates[0] < exp <= dates[-1] + 40:
            expiries.append(exp)
    rows, settles = [], []
    for k, exp in enumerate(expiries):
        sym = f"VX{str(exp.astype('datetime64[M]')).replace('-', '')}"
        live = (dates <= exp) & (dates > exp - 90)
        idx = np.flatnonzero(live)
        if idx.size == 0:
            continue
        basis = 1.0 + 0.002 * np.asarray(np.busday_count(dates[idx], exp), dtype=float)
        for i, b in zip(idx, basis):
            rows.append((dates[i], sym, round(float(spot[i] * b), 4)))
        settle = float(spot[idx[-1]] * (1 + rng.normal(0, 0.005)))
        settles.append((sym, exp, round(settle, 4)))
    rows.sort(key=lambda t: (t[0], t[1]))
    with futures_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trade_date", "symbol", "close"])
        for d, s, c in rows:
            w.writerow([str(d), s, repr(c)])
    with settle_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["symbol", "expiration_date", "settlement_price"])
        for s, e, p in settles:
            w.writerow([s, str(e), repr(p)])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path)
    ap.add_argument("--rows", type=int, default=6300)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    dates = write_prices(args.out / "prices.csv", args.rows, args.seed)
    write_futures(args.out / "futures.csv", args.out / "settlements.csv", dates, args.seed + 1)
    print(f"wrote synthetic data to {args.out}")


if __name__ == "__main__":
    main()
