"""Small shared fixtures for pipeline-level tests."""

import numpy as np

from svlstm.marketdata import PriceSeries
from svlstm.neuralnet import HyperParams, HyperSpace, TrainSettings
from svlstm.pipeline import ExperimentPlan, WindowPlan
from svlstm.svmodel import simulate_sv

SMALL_WINDOWS = WindowPlan(train_days=120, val_days=40, test_days=20, step_days=20)
TINY_HP = HyperParams(lstm_units=(4, 4, 4), learning_rate=0.05)


def small_prices(n=400, seed=11) -> PriceSeries:
    r, _ = simulate_sv(n - 1, -9.0, 0.95, 0.2, seed=seed)
    dates = np.arange(np.datetime64("2010-01-01"), np.datetime64("2010-01-01") + n)
    return PriceSeries(dates, 100.0 * np.exp(np.concatenate([[0.0], np.cumsum(r)])))


def small_plan(**kw) -> ExperimentPlan:
    base = dict(
        model="lstm", lookback=5, windows=SMALL_WINDOWS, n_trials=2, executions_per_trial=1,
        tuning=TrainSettings(2, 1, 16), final=TrainSettings(3, 2, 16),
        space=HyperSpace(units=(4,), n_lstm_layers=(1,), n_dense_layers=(0, 1)),
        sv_train_len=60, sv_n_iter=40, sv_n_burnin=10,
    )
    base.update(kw)
    return ExperimentPlan(**base)
