"""Acceptance checks, one per primary criterion.

Each check prints a single ``PASS``/``FAIL`` line with its measured figures.
Run under pytest (lines are repeated in the terminal summary) or directly
with ``python tests/test_acceptance.py``.
"""

import importlib.util
import itertools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

import bt_fixture as fx  # noqa: E402
from conftest import ACCEPTANCE_LINES  # noqa: E402
from fixtures import small_plan, small_prices  # noqa: E402
from gradcheck import STEP, kink_free_fixture, numeric_gradients, relative_error  # noqa: E402
from svlstm.backtest import benchmark, simulate  # noqa: E402
from svlstm.evaluation import (  # noqa: E402
    diebold_mariano,
    point_metrics,
    wilcoxon_null_distribution,
    wilcoxon_signed_rank,
)
from svlstm.marketdata import PriceSeries, ReturnSeries, log_returns, rolling_mean, rolling_volatility  # noqa: E402
from svlstm.neuralnet import Dataset, HyperParams, backward, init_network, train  # noqa: E402
from svlstm.neuralnet.training import evaluate  # noqa: E402
from svlstm.pipeline import WindowPlan, fit_scaler, inverse_transform, read_forecasts, run_experiment  # noqa: E402
from svlstm.pipeline import split_windows, transform  # noqa: E402
from svlstm.svmodel import SvPosterior, forecast_one_step, rolling_sv_forecast, sample_posterior, simulate_sv  # noqa: E402

# pinned tolerances and budgets
FORMULA_TOL = 1e-12
FORMULA_FIXTURES = 1000
FORMULA_SECONDS = 5.0
SCALER_TOL = 1e-12
GRAD_TOL = 1e-5
GRAD_MAX_UNITS = 8
GRAD_SECONDS = 60.0
CAPACITY_MSE = 1e-5
CAPACITY_EPOCHS = 2000
CAPACITY_SECONDS = 60.0
SV_TRUTH = {"mu": -9.0, "phi": 0.97, "sigma_eta": 0.15}
SV_BANDS = {"mu": 0.5, "phi": 0.03, "sigma_eta": 0.05}
SV_T, SV_RUNS, SV_REQUIRED = 3000, 10, 9
SV_ITER, SV_BURNIN = 15000, 3000
SV_DEGENERATE_TOL = 1e-6
SIZE_N, SIZE_REPS, SIZE_ALPHA, SIZE_BAND = 250, 2000, 0.05, (0.03, 0.07)
LEDGER_TOL = 1e-9
SMOKE_SECONDS = 30 * 60


def record(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} | {name} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    assert ok, line


def _close(a, b, tol=FORMULA_TOL):
    return abs(a - b) <= tol * max(1.0, abs(b))


# ---------------------------------------------------------------- 1


def test_formula_oracles():
    """Log returns, rolling mean/volatility, min-max scaling and MSE/MAE/MAPE against plain loops."""
    rng = np.random.default_rng(20240101)
    start = time.perf_counter()
    worst = 0.0
    ok = True
    for _ in range(FORMULA_FIXTURES):
        n = int(rng.integers(25, 60))
        closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, n)))
        dates = np.arange(np.datetime64("2000-01-01"), np.datetime64("2000-01-01") + n)
        r = log_returns(PriceSeries(dates, closes)).returns
        ref_r = [math.log(closes[t] / closes[t - 1]) for t in range(1, n)]
        window = int(rng.integers(2, 22))
        rs = ReturnSeries(dates[1:], r)
        _, means = rolling_mean(rs, window)
        vols = rolling_volatility(rs, window).values
        x = rng.normal(0, rng.uniform(0.1, 5), (int(rng.integers(2, 30)), 1))
        lo, hi = float(x.min()), float(x.max())
        scaled = transform(fit_scaler("minmax", x), x)[:, 0]
        y = rng.uniform(0.005, 0.05, int(rng.integers(1, 50)))
        f = y + rng.normal(0, 0.003, y.size)
        m = point_metrics(y, f)
        pairs = [(a, b) for a, b in zip(r, ref_r)]
        for t in range(len(means)):
            block = ref_r[t:t + window]
            mean = math.fsum(block) / window
            var = math.fsum((v - mean) ** 2 for v in block) / (window - 1)
            pairs += [(means[t], mean), (vols[t], math.sqrt(var))]
        pairs += [(s, (v - lo) / (hi - lo) * (1 - 1e-11) + 1e-11) for s, v in zip(scaled, x[:, 0])]
        pairs += [
            (m.mse, math.fsum((a - b) ** 2 for a, b in zip(y, f)) / y.size),
            (m.mae, math.fsum(abs(a - b) for a, b in zip(y, f)) / y.size),
            (m.mape_percent, math.fsum(abs((a - b) / a) for a, b in zip(y, f)) / y.size * 100),
        ]
        for a, b in pairs:
            worst = max(worst, abs(a - b) / max(1.0, abs(b)))
            ok &= _close(a, b)
    secs = time.perf_counter() - start
    record("formula oracles", ok and secs < FORMULA_SECONDS,
           f"{FORMULA_FIXTURES} fixtures, worst scaled error {worst:.2e} (tol {FORMULA_TOL}), {secs:.2f} s (< {FORMULA_SECONDS})")


# ---------------------------------------------------------------- 2


def test_scaler_round_trip():
    rng = np.random.default_rng(7)
    worst = {k: 0.0 for k in ("minmax", "standard", "robust")}
    extremes_exact = True
    for _ in range(300):
        x = rng.uniform(-10, 10, (int(rng.integers(3, 80)), int(rng.integers(1, 5))))
        for kind in worst:
            s = fit_scaler(kind, x)
            worst[kind] = max(worst[kind], float(np.max(np.abs(inverse_transform(s, transform(s, x)) - x))))
        t = transform(fit_scaler("minmax", x), x)
        extremes_exact &= bool(np.all(t.min(axis=0) == 1e-11) and np.all(t.max(axis=0) == 1.0))
    ok = extremes_exact and all(v <= SCALER_TOL for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record("scaler round-trip", ok, f"max |inverse(transform(x)) - x|: {detail} (tol {SCALER_TOL}); "
           f"minmax extremes exactly 1e-11 and 1: {extremes_exact}")


# ---------------------------------------------------------------- 3


def test_lstm_gradient_check():
    start = time.perf_counter()
    worst, cases = 0.0, 0
    units = {1: (8,), 2: (5, 3), 3: (4, 3, 2)}
    for loss_id, act, n_lstm, n_dense in itertools.product(("mse", "mae", "madl"), ("tanh", "relu", "sigmoid"),
                                                          (1, 2, 3), (0, 1, 2, 3)):
        lstm_units = (units[n_lstm] + (2, 2, 2))[:3]
        hp = HyperParams(n_lstm_layers=n_lstm, lstm_units=lstm_units, lstm_activations=(act,) * 3,
                         n_dense_layers=n_dense, dense_units=(4, 3, 2), dense_activations=(act,) * 3, loss=loss_id)
        assert max(hp.lstm_units + hp.dense_units) <= GRAD_MAX_UNITS

        def make(attempt, hp=hp, key=cases):
            rng = np.random.default_rng([key, attempt])
            net = init_network(2, hp, rng)
            ref = rng.normal(0, 0.1, 5) if hp.loss == "madl" else None
            return net, rng.normal(size=(5, 4, 2)), rng.normal(0, 0.5, 5), ref, None

        net, X, y, ref, _ = kink_free_fixture(make)
        _, grads = backward(net, X, y, ref)
        for a, n in zip(grads, numeric_gradients(net, X, y, ref, step=STEP)):
            worst = max(worst, relative_error(a, n))
        cases += 1
    secs = time.perf_counter() - start
    record("LSTM gradient check", worst < GRAD_TOL and secs < GRAD_SECONDS,
           f"{cases} configs (3 losses x 3 activations x 1-3 LSTM x 0-3 dense, <= {GRAD_MAX_UNITS} units), "
           f"step {STEP}, worst relative error {worst:.2e} (< {GRAD_TOL}), {secs:.1f} s (< {GRAD_SECONDS})")


# ---------------------------------------------------------------- 4


def test_lstm_capacity():
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 1, (50, 5, 2))
    y = 0.3 * X[:, -1, 0] + 0.2 * X[:, -2, 1] + 0.1
    data = Dataset(X, y)
    hp = HyperParams(n_lstm_layers=1, lstm_units=(16, 16, 16), learning_rate=0.5)
    net = init_network(2, hp, np.random.default_rng(1))
    start = time.perf_counter()
    rep = train(net, data, data, max_epochs=CAPACITY_EPOCHS, patience=CAPACITY_EPOCHS, seed=1, batch_size=4)
    secs = time.perf_counter() - start
    mse = evaluate(net, data)
    record("LSTM capacity", mse < CAPACITY_MSE and rep.epochs_run <= CAPACITY_EPOCHS and secs < CAPACITY_SECONDS,
           f"50 noiseless sequences, 1x16 tanh LSTM, SGD lr 0.5 batch 4: train MSE {mse:.2e} (< {CAPACITY_MSE}) "
           f"after {rep.epochs_run} epochs, {secs:.1f} s (< {CAPACITY_SECONDS})")


# ---------------------------------------------------------------- 5


def test_sv_posterior_recovery():
    start = time.perf_counter()
    hits, rows = 0, []
    for seed in range(SV_RUNS):
        y, _ = simulate_sv(SV_T, SV_TRUTH["mu"], SV_TRUTH["phi"], SV_TRUTH["sigma_eta"], seed=seed)
        s = sample_posterior(y, SV_ITER, SV_BURNIN, seed=seed).summary()
        good = all(abs(s[k] - SV_TRUTH[k]) <= SV_BANDS[k] for k in SV_TRUTH)
        hits += good
        rows.append(f"{s['mu']:.2f}/{s['phi']:.3f}/{s['sigma_eta']:.3f}{'' if good else '*'}")
    secs = time.perf_counter() - start
    record("SV posterior recovery", hits >= SV_REQUIRED,
           f"{hits}/{SV_RUNS} runs within mu +-0.5, phi +-0.03, sigma +-0.05 (need {SV_REQUIRED}); "
           f"means mu/phi/sigma: {' '.join(rows)}; {SV_ITER} iterations ({SV_BURNIN} burn-in), {secs:.0f} s")


# ---------------------------------------------------------------- 6


def test_sv_degenerate_forecast():
    rng = np.random.default_rng(3)
    worst = 0.0
    for sigma in (1e-8, 1e-10, 1e-12):
        for _ in range(50):
            mu, phi, hT = rng.uniform(-11, -7), rng.uniform(-0.99, 0.99), rng.uniform(-12, -6)
            n = int(rng.integers(1, 400))
            paths = np.zeros((n, 4))
            paths[:, -1] = hT
            post = SvPosterior(np.full(n, mu), np.full(n, phi), np.full(n, sigma), paths, 0, n)
            got = forecast_one_step(post, seed=int(rng.integers(1 << 30))).median_vol
            want = math.exp((mu + phi * (hT - mu)) / 2)
            worst = max(worst, abs(got - want) / want)
    record("SV degenerate forecast", worst <= SV_DEGENERATE_TOL,
           f"150 fixtures with sigma_eta in {{1e-8, 1e-10, 1e-12}}: worst relative gap to "
           f"exp((mu + phi (h_T - mu)) / 2) {worst:.1e} (tol {SV_DEGENERATE_TOL})")


# ---------------------------------------------------------------- 7


def test_comparison_test_validity():
    rng = np.random.default_rng(11)
    exact = True
    checked = 0
    for n in range(1, 11):
        for magnitudes in (np.arange(1.0, n + 1), rng.integers(1, 4, n).astype(float)):
            counts = {}
            for signs in itertools.product((-1.0, 1.0), repeat=n):
                w = wilcoxon_signed_rank(np.array(signs) * magnitudes, np.zeros(n)).statistic
                counts[w] = counts.get(w, 0) + 1
            ranks = np.sort(np.abs(magnitudes))
            from scipy.stats import rankdata

            values, freq = wilcoxon_null_distribution(rankdata(ranks))
            exact &= dict(zip(values.tolist(), freq.tolist())) == counts
            checked += 1
    rej = {"wilcoxon": 0, "dm_squared": 0, "dm_absolute": 0}
    for _ in range(SIZE_REPS):
        e1, e2 = rng.standard_normal(SIZE_N), rng.standard_normal(SIZE_N)
        rej["wilcoxon"] += wilcoxon_signed_rank(e1, e2).p_value < SIZE_ALPHA
        rej["dm_squared"] += diebold_mariano(e1, e2, "squared").p_value < SIZE_ALPHA
        rej["dm_absolute"] += diebold_mariano(e1, e2, "absolute").p_value < SIZE_ALPHA
    size = {k: v / SIZE_REPS for k, v in rej.items()}
    lo, hi = SIZE_BAND
    ok = exact and all(lo <= v <= hi for v in size.values())
    record("test validity", ok,
           f"Wilcoxon W distribution equals 2^n enumeration for {checked} magnitude sets, n <= 10: {exact}; "
           f"H0 size at alpha {SIZE_ALPHA} (n={SIZE_N}, {SIZE_REPS} reps): "
           + ", ".join(f"{k} {v:.4f}" for k, v in size.items()) + f" (band [{lo}, {hi}])")


# ---------------------------------------------------------------- 8


def test_window_geometry():
    plan = WindowPlan()
    ws = split_windows(6300, plan)
    dates = np.arange(np.datetime64("1998-01-02"), np.datetime64("1998-01-02") + 6300)
    disjoint = all(
        w.train.stop <= w.val.start and w.val.stop <= w.test.start
        and not (set(w.train) & set(w.val) or set(w.val) & set(w.test) or set(w.train) & set(w.test))
        for w in ws
    )
    test_dates = np.concatenate([dates[w.test.start:w.test.stop] for w in ws])
    increasing = bool(np.all(test_dates[1:] > test_dates[:-1]))
    record("window geometry", len(ws) == 11 and disjoint and increasing,
           f"6300 rows -> {len(ws)} windows (need 11), disjoint train/val/test: {disjoint}, "
           f"{test_dates.size} concatenated test dates strictly increasing: {increasing}")


# ---------------------------------------------------------------- 9


def _perturbed(prices, date, factor=1.37):
    closes = prices.closes.copy()
    closes[int(np.searchsorted(prices.dates, date))] *= factor
    return PriceSeries(prices.dates, closes)


def _same_fit(a, b):
    scalers = all(
        np.array_equal(x.loc, y.loc) and np.array_equal(x.scale, y.scale)
        for x, y in ((a.scaler_tuning, b.scaler_tuning), (a.scaler_final, b.scaler_final))
    )
    return scalers and all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))


def test_no_leakage():
    prices = small_prices()
    checks, failures = 0, 0
    for model in ("lstm", "hybrid"):
        plan = small_plan(model=model)
        sv = rolling_sv_forecast(log_returns(prices), plan.sv_train_len, plan.sv_n_iter, plan.sv_n_burnin) \
            if model == "hybrid" else None
        base = run_experiment(plan, prices, sv=sv)
        for k in (0, len(base.windows) - 1):
            w = base.windows[k]
            for date in (w.dates[0], w.dates[len(w.dates) // 2], w.dates[-1]):
                moved = _perturbed(prices, date)
                sv2 = rolling_sv_forecast(log_returns(moved), plan.sv_train_len, plan.sv_n_iter, plan.sv_n_burnin) \
                    if model == "hybrid" else None
                other = run_experiment(plan, moved, sv=sv2).windows[k]
                checks += 1
                failures += not _same_fit(w, other)
    # control: the same check notices a change inside the training range
    plan = small_plan()
    base = run_experiment(plan, prices).windows[0]
    inside = prices.dates[int(np.searchsorted(prices.dates, base.dates[0])) - 50]
    sensitive = not _same_fit(base, run_experiment(plan, _perturbed(prices, inside)).windows[0])
    record("no leakage", failures == 0 and sensitive,
           f"{checks} test-range perturbations (lstm and hybrid, first and last window): "
           f"{failures} changed scaler params or weights; a training-range perturbation is detected: {sensitive}")


# ---------------------------------------------------------------- 10


def test_backtest_ledger():
    led = simulate(fx.futures(), fx.signals(), fx.CAPITAL, fx.ALLOC, fx.COST)
    gap = float(np.max(np.abs(np.array(led.equity) - np.array(fx.hand_equity()))))
    long_ = benchmark("long_only", fx.futures(), dates=fx.DATES)
    short = benchmark("short_only", fx.futures(), dates=fx.DATES)
    negated = all(a == -b for a, b in zip(long_.daily_returns, short.daily_returns))
    record("backtest ledger", gap <= LEDGER_TOL and negated and led.n_rolls() == 1 and led.n_flips() == 1,
           f"10-day fixture ({led.n_rolls()} rollover, {led.n_flips()} flip, cost {fx.COST}, allocation {fx.ALLOC}): "
           f"max equity gap {gap:.1e} (tol {LEDGER_TOL}); long/short pre-cost returns exact negations: {negated}")


# ---------------------------------------------------------------- 11


def _load_smoke_runner():
    spec = importlib.util.spec_from_file_location("run_smoke", HERE.parent / "scripts" / "run_smoke.py")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


@pytest.mark.slow
def test_end_to_end_smoke(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    timings = _load_smoke_runner().run(out, rows=6300, seed=0)
    files = {m: read_forecasts(out / m / "forecasts.csv") for m in ("sv", "lstm", "hybrid")}
    d0, y0, _ = files["sv"]
    aligned = all(np.array_equal(d, d0) and np.array_equal(y, y0) for d, y, _ in files.values())
    import json

    report = json.loads((out / "comparison" / "comparison.json").read_text())
    ok = aligned and len(report["comparisons"]) == 3 and d0.size > 0 and timings["total"] < SMOKE_SECONDS
    record("end-to-end smoke", ok,
           f"6300 synthetic prices, 3 trials x 1 execution: {d0.size} aligned forecasts per model: {aligned}; "
           f"{len(report['comparisons'])} pairwise comparisons; "
           + ", ".join(f"{k} {v:.0f} s" for k, v in timings.items()) + f" (< {SMOKE_SECONDS} s)")


if __name__ == "__main__":
    import tempfile

    class _Factory:
        def mktemp(self, name):
            return Path(tempfile.mkdtemp(prefix=name))

    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn(_Factory()) if name == "test_end_to_end_smoke" else fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
