import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fixtures import TINY_HP, small_plan, small_prices
from svlstm.errors import ConfigError, DataError, DegenerateError
from svlstm.marketdata import PriceSeries, ReturnSeries, VolSeries
from svlstm.pipeline import (
    FeatureMatrix,
    WindowPlan,
    assemble_hybrid_features,
    build_features,
    fit_scaler,
    inverse_transform,
    make_sequences,
    read_forecasts,
    run_experiment,
    split_windows,
    transform,
)
from svlstm.svmodel import SvForecast


def _days(n, start="2021-03-01"):
    return np.arange(np.datetime64(start), np.datetime64(start) + n)


# ---------------------------------------------------------------- windows


def test_default_plan_gives_eleven_windows():
    ws = split_windows(6300)
    assert len(ws) == 11 and WindowPlan().n_windows(6300) == 11
    assert ws[-1].stop == 6300
    for k, w in enumerate(ws):
        assert w.train.start == 252 * k
        assert w.train.stop == w.val.start and w.val.stop == w.test.start
        assert len(w.train) == 2772 and len(w.val) == 756 and len(w.test) == 252


def test_exact_span_gives_one_window_and_short_fails():
    p = WindowPlan(10, 5, 3, 2)
    assert len(split_windows(18, p)) == 1
    assert len(split_windows(19, p)) == 1 and len(split_windows(20, p)) == 2
    with pytest.raises(DataError):
        split_windows(17, p)
    with pytest.raises(ValueError):
        WindowPlan(0, 5, 3, 2)


@given(st.integers(1, 30), st.integers(1, 30), st.integers(1, 30), st.integers(1, 30), st.integers(0, 200))
def test_windows_tile_and_never_overrun(tr, va, te, step, extra):
    plan = WindowPlan(tr, va, te, step)
    n = plan.span + extra
    ws = split_windows(n, plan)
    assert len(ws) == extra // step + 1
    for k, w in enumerate(ws):
        assert w.start == k * step and w.stop <= n
        assert set(w.train).isdisjoint(w.val) and set(w.val).isdisjoint(w.test)


# ---------------------------------------------------------------- sequences


def _fm(n, k=2, seed=0):
    rng = np.random.default_rng(seed)
    d = _days(n + 1)
    return FeatureMatrix(d[:-1], tuple(f"c{i}" for i in range(k)), rng.normal(size=(n, k)), rng.normal(size=n), d[1:])


def test_make_sequences_counts_and_errors():
    X, y, td = make_sequences(_fm(22), 21)
    assert X.shape == (1, 21, 2) and y.shape == (1,)
    with pytest.raises(DataError):
        make_sequences(_fm(21), 21)
    with pytest.raises(ValueError):
        make_sequences(_fm(30), 0)


@given(st.integers(2, 40), st.integers(1, 10), st.integers(1, 3))
def test_make_sequences_index_oracle(n_extra, lookback, k):
    fm = _fm(lookback + n_extra, k, seed=n_extra)
    X, y, td = make_sequences(fm, lookback)
    assert X.shape[0] == len(fm) - lookback
    for s in range(X.shape[0]):
        for t in range(lookback):
            assert np.array_equal(X[s, t], fm.values[s + t])
        # target is the rolling volatility dated at row s + lookback
        assert y[s] == fm.target[s + lookback - 1]
        assert td[s] == fm.dates[s + lookback]
        assert td[s] > fm.dates[s + lookback - 1]
    assert np.all(td[1:] > td[:-1])


# ---------------------------------------------------------------- scalers


def test_scaler_examples():
    s = fit_scaler("standard", [1.0, 2.0, 3.0])
    z = transform(s, np.array([1.0, 2.0, 3.0]))
    assert z.mean() == 0 and np.std(z, ddof=1) == pytest.approx(1.0, abs=1e-15)
    m = fit_scaler("minmax", [[2.0, -1.0], [5.0, 3.0], [3.0, 0.0]])
    t = transform(m, [[2.0, -1.0], [5.0, 3.0]])
    assert t[0].tolist() == [1e-11, 1e-11] and t[1].tolist() == [1.0, 1.0]
    r = fit_scaler("robust", [1.0, 2.0, 3.0, 4.0, 100.0])
    assert transform(r, np.array([3.0]))[0] == 0.0


def test_scaler_errors():
    for kind in ("minmax", "standard", "robust"):
        with pytest.raises(DegenerateError):
            fit_scaler(kind, [[1.0, 2.0], [1.0, 3.0], [1.0, 4.0]])
    with pytest.raises(ValueError):
        fit_scaler("minmax", [[1.0]])
    with pytest.raises(ValueError):
        fit_scaler("zscore", [1.0, 2.0])


@given(arrays(float, st.tuples(st.integers(3, 30), st.integers(1, 4)), elements=st.floats(-10, 10)),
       st.sampled_from(["minmax", "standard", "robust"]))
def test_scaler_round_trip(x, kind):
    try:
        s = fit_scaler(kind, x)
    except DegenerateError:
        return
    assert np.max(np.abs(inverse_transform(s, transform(s, x)) - x)) <= 1e-12


# ---------------------------------------------------------------- hybrid features


def _hand_inputs():
    d = _days(10)
    returns = ReturnSeries(d, np.arange(1, 11) / 100.0)
    vol = VolSeries(d[2:], np.arange(3, 11) / 1000.0, 3)
    sv = [SvForecast(day, 1.0 + k) for k, day in enumerate(d[5:])] + [SvForecast(d[-1] + 1, 99.0)]
    return d, returns, vol, sv


def test_hybrid_hand_fixture():
    d, returns, vol, sv = _hand_inputs()
    fm = assemble_hybrid_features(returns, vol, sv)
    assert fm.columns == ("log_return", "rolling_vol_21", "sv_forecast_t_plus_1")
    assert np.array_equal(fm.dates, d[4:9])
    assert np.array_equal(fm.target_dates, d[5:10])
    expected = np.array([
        [0.05, 0.005, 1.0],
        [0.06, 0.006, 2.0],
        [0.07, 0.007, 3.0],
        [0.08, 0.008, 4.0],
        [0.09, 0.009, 5.0],
    ])
    assert np.array_equal(fm.values, expected)
    assert np.array_equal(fm.target, np.array([6, 7, 8, 9, 10]) / 1000.0)


def test_dropping_sv_gives_plain_features():
    d, returns, vol, sv = _hand_inputs()
    hybrid = assemble_hybrid_features(returns, vol, sv)
    plain = assemble_hybrid_features(returns, vol).from_date(hybrid.dates[0])
    stripped = hybrid.without("sv_forecast_t_plus_1")
    assert plain.columns == stripped.columns
    assert np.array_equal(plain.values, stripped.values)
    assert np.array_equal(plain.target, stripped.target)


def test_hybrid_errors():
    d, returns, vol, sv = _hand_inputs()
    with pytest.raises(DataError):
        assemble_hybrid_features(returns, vol, [SvForecast(d[0] - 30, 1.0)])
    with pytest.raises(DataError, match="missing SV"):
        assemble_hybrid_features(returns, vol, sv[:2] + sv[3:])


# ---------------------------------------------------------------- experiments


def test_plan_validation_lists_all_problems():
    with pytest.raises(ConfigError) as info:
        small_plan(model="garch", scaler="zscore", lookback=0)
    text = str(info.value)
    assert "model" in text and "scaler" in text and "lookback" in text


def test_lstm_run_geometry_and_determinism(tmp_path):
    prices = small_prices()
    plan = small_plan()
    a = run_experiment(plan, prices, tmp_path / "a")
    b = run_experiment(plan, prices, tmp_path / "b")
    n_windows = len(a.windows)
    assert n_windows >= 2
    assert a.dates.size == n_windows * plan.windows.test_days
    assert np.all(a.dates[1:] > a.dates[:-1])
    assert (tmp_path / "a" / "forecasts.csv").read_bytes() == (tmp_path / "b" / "forecasts.csv").read_bytes()
    d, y, f = read_forecasts(tmp_path / "a" / "forecasts.csv")
    assert np.array_equal(d, a.dates) and np.array_equal(f, a.y_pred)
    for k in range(n_windows):
        wdir = tmp_path / "a" / f"window_{k}"
        assert (wdir / "report.json").exists() and (wdir / "hyperparams.json").exists()
        assert (wdir / "train_log.csv").read_text().startswith("epoch,train_loss,val_loss")
    assert a.windows[0].report["tuned"] is True


def test_pinned_hyperparams_skip_tuning_same_geometry():
    prices = small_prices()
    tuned = run_experiment(small_plan(), prices)
    pinned = run_experiment(small_plan(hyperparams=TINY_HP), prices)
    assert pinned.windows[0].report["tuned"] is False and "search" not in pinned.windows[0].report
    assert np.array_equal(tuned.dates, pinned.dates)
    assert np.array_equal(tuned.y_true, pinned.y_true)
    assert all(w.hyperparams == TINY_HP for w in pinned.windows)


def test_hybrid_and_sv_share_rows_with_lstm():
    prices = small_prices()
    plan = small_plan(hyperparams=TINY_HP)
    fm_h, sv = build_features(small_plan(model="hybrid"), prices)
    fm_l, _ = build_features(plan, prices)
    assert np.array_equal(fm_h.dates, fm_l.dates)
    assert np.array_equal(fm_h.without("sv_forecast_t_plus_1").values, fm_l.values)
    res_sv = run_experiment(small_plan(model="sv"), prices, sv=sv)
    res_l = run_experiment(plan, prices)
    assert np.array_equal(res_sv.dates, res_l.dates) and np.array_equal(res_sv.y_true, res_l.y_true)
    # SV forecast for day t is the one dated t
    by_date = {f.date: f.median_vol for f in sv}
    assert all(res_sv.y_pred[k] == by_date[d] for k, d in enumerate(res_sv.dates))


def _test_price_index(prices: PriceSeries, date) -> int:
    return int(np.searchsorted(prices.dates, date))


def test_no_leakage_from_test_range():
    prices = small_prices()
    plan = small_plan()
    base = run_experiment(plan, prices)
    w0 = base.windows[0]
    for date in (w0.dates[0], w0.dates[len(w0.dates) // 2], w0.dates[-1]):
        closes = prices.closes.copy()
        closes[_test_price_index(prices, date)] *= 1.37
        other = run_experiment(plan, PriceSeries(prices.dates, closes)).windows[0]
        for s_a, s_b in ((w0.scaler_tuning, other.scaler_tuning), (w0.scaler_final, other.scaler_final)):
            assert np.array_equal(s_a.loc, s_b.loc) and np.array_equal(s_a.scale, s_b.scale)
        assert all(np.array_equal(a, b) for a, b in zip(w0.weights, other.weights))


def test_sv_forecast_file_round_trip(tmp_path):
    from svlstm.pipeline.experiment import load_sv_forecasts, write_sv_forecasts

    days = _days(3)
    fc = [SvForecast(d, 0.01 * (k + 1), {0.05: 0.001 * k, 0.5: 0.01, 0.95: 0.1}) for k, d in enumerate(days)]
    write_sv_forecasts(tmp_path / "sv.csv", fc)
    assert (tmp_path / "sv.csv").read_text().splitlines()[0] == "date,median_vol,q05,q50,q95"
    back = load_sv_forecasts(tmp_path / "sv.csv")
    assert [f.date for f in back] == list(days)
    assert [f.median_vol for f in back] == [f.median_vol for f in fc]
