"""End-to-end smoke run on synthetic data: SV, LSTM and hybrid forecasts, comparison and backtest.

Uses a reduced budget (3 trials x 1 execution, short training, smaller
networks, 500 SV iterations) so the whole run takes minutes on one core.
"""

import argparse
import sys
import time
from pathlib import Path

from svlstm.cli import main as cli

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))
import make_synthetic  # noqa: E402

SMOKE_CONFIG = """\
[data]
prices = "prices.csv"

[experiment]
model = "hybrid"
lookback = 21
scaler = "minmax"
loss = "mse"
seed = {seed}
n_trials = 3
executions_per_trial = 1
sv_train_len = 504
sv_n_iter = 500
sv_n_burnin = 100

[tuning]
max_epochs = 5
patience = 2

[final]
max_epochs = 10
patience = 3

[space]
units = [16, 32]
n_lstm_layers = [1, 2]
n_dense_layers = [0, 1]
"""


def run(out: Path, rows: int = 6300, seed: int = 0) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    make_synthetic.main([str(out), "--rows", str(rows)])
    cfg = out / "smoke.toml"
    cfg.write_text(SMOKE_CONFIG.format(seed=seed))

    def step(name, argv):
        t = time.perf_counter()
        code = cli(argv)
        timings[name] = time.perf_counter() - t
        if code != 0:
            raise SystemExit(f"{name} failed with exit code {code}")

    step("hybrid", ["forecast", str(cfg), "--out", str(out / "hybrid")])
    sv_file = str(out / "hybrid" / "sv_forecasts.csv")
    step("sv", ["forecast", str(cfg), "--model", "sv", "--sv-forecasts", sv_file, "--out", str(out / "sv")])
    step("lstm", ["forecast", str(cfg), "--model", "lstm", "--out", str(out / "lstm")])
    step("compare", ["compare", str(out / "hybrid" / "forecasts.csv"), str(out / "lstm" / "forecasts.csv"),
                     str(out / "sv" / "forecasts.csv"), "--names", "SV-LSTM", "LSTM", "SV",
                     "--out", str(out / "comparison" / "comparison.json")])
    step("backtest", ["backtest", str(out / "hybrid" / "forecasts.csv"), "--futures", str(out / "futures.csv"),
                      "--settlements", str(out / "settlements.csv"), "--benchmarks", "--out", str(out / "backtest")])
    timings["total"] = time.perf_counter() - t0
    return timings


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path, nargs="?", default=Path("runs/smoke"))
    ap.add_argument("--rows", type=int, default=6300)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for name, secs in run(args.out, args.rows, args.seed).items():
        print(f"{name:10s} {secs:8.1f} s")
