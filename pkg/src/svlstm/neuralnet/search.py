from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError
from .hyperparams import TUNING, HyperParams, HyperSpace, TrainSettings
from .network import init_network
from .training import Dataset, train

log = logging.getLogger(__name__)


def execution_seed(base_seed: int, trial: int, execution: int) -> int:
    return int(np.random.SeedSequence([int(base_seed), int(trial), int(execution)]).generate_state(1)[0])


def sample_trials(space: HyperSpace, n_trials: int, seed: int) -> list[HyperParams]:
    """Uniform draws from ``space``; distinct when the space has at least ``n_trials`` points."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xC0FFEE]))
    distinct = space.size() >= n_trials
    trials, seen = [], set()
    while len(trials) < n_trials:
        hp = space.sample(rng)
        if distinct and hp.key() in seen:
            continue
        seen.add(hp.key())
        trials.append(hp)
    return trials


@dataclass
class SearchResult:
    best: HyperParams
    trial_losses: list
    trials: list
    execution_losses: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "best": self.best.to_dict(),
            "trials": [
                {"hyperparams": hp.to_dict(), "mean_val_loss": _finite_or_none(m),
                 "execution_val_losses": [_finite_or_none(v) for v in ex]}
                for hp, m, ex in zip(self.trials, self.trial_losses, self.execution_losses)
            ],
        }


def _finite_or_none(x):
    return float(x) if math.isfinite(x) else None


def random_search(
    space: HyperSpace,
    train_set: Dataset,
    val_set: Dataset,
    n_trials: int = 25,
    executions_per_trial: int = 3,
    seed: int = 0,
    settings: TrainSettings = TUNING,
    loss_override: str | None = None,
) -> SearchResult:
    """Pick the configuration with the lowest mean best-validation loss.

    Every execution trains a freshly initialised network with its own seed
    derived from (seed, trial, execution). A diverging execution scores +inf.
    ``loss_override`` pins the training loss for every trial.
    """
    if n_trials < 1 or executions_per_trial < 1:
        raise ValueError("n_trials and executions_per_trial must be at least 1")
    trials = sample_trials(space, n_trials, seed)
    if loss_override is not None:
        trials = [HyperParams.from_dict({**hp.to_dict(), "loss": loss_override}) for hp in trials]
    input_dim = train_set.inputs.shape[2]
    means, per_exec = [], []
    for t, hp in enumerate(trials):
        scores = []
        for e in range(executions_per_trial):
            s = execution_seed(seed, t, e)
            rng = np.random.default_rng(s)
            net = init_network(input_dim, hp, rng)
            try:
                report = train(net, train_set, val_set, settings.max_epochs, settings.patience,
                               seed=s, batch_size=settings.batch_size)
                scores.append(report.best_val_loss)
            except NumericError as exc:
                log.warning("trial %d execution %d failed: %s", t, e, exc)
                scores.append(math.inf)
        mean = float(np.mean(scores))
        means.append(mean)
        per_exec.append(scores)
        log.info("trial %d/%d mean val loss %.6g", t + 1, n_trials, mean)
    best = int(np.argmin(means))
    return SearchResult(trials[best], means, trials, per_exec)
