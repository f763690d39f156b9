from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingDivergedError
from .network import LstmNetwork, backward, draw_masks, loss, predict

log = logging.getLogger(__name__)


@dataclass(eq=False)
class Dataset:
    """Input sequences (n, lookback, features), targets (n,) and an optional MADL reference (n,)."""

    inputs: np.ndarray
    targets: np.ndarray
    reference: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float).ravel()
        if self.inputs.ndim != 3 or self.inputs.shape[0] != self.targets.size:
            raise ValueError("inputs must be (n, lookback, features) with one target per sequence")
        if self.reference is not None:
            self.reference = np.asarray(self.reference, dtype=float).ravel()
            if self.reference.size != self.targets.size:
                raise ValueError("reference must have one value per target")

    def __len__(self) -> int:
        return self.targets.size

    def subset(self, idx) -> "Dataset":
        ref = None if self.reference is None else self.reference[idx]
        return Dataset(self.inputs[idx], self.targets[idx], ref)


@dataclass
class TrainReport:
    epochs_run: int = 0
    best_epoch: int = 0
    train_loss_curve: list = field(default_factory=list)
    val_loss_curve: list = field(default_factory=list)
    best_val_loss: float = float("inf")

    def rows(self):
        return [(e + 1, tr, va) for e, (tr, va) in enumerate(zip(self.train_loss_curve, self.val_loss_curve))]

    def to_dict(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "train_loss_curve": list(self.train_loss_curve),
            "val_loss_curve": list(self.val_loss_curve),
        }


def sgd_step(weights, gradients, learning_rate: float):
    """w <- w - learning_rate * dL/dw, returning new arrays."""
    if learning_rate < 0:
        raise ValueError("learning_rate must be non-negative")
    return [np.asarray(w) - learning_rate * np.asarray(g) for w, g in zip(weights, gradients)]


class EarlyStopping:
    """Stop once validation loss has not improved for ``patience`` consecutive epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, value: float) -> tuple[bool, bool]:
        """Record one epoch; returns (improved, should_stop)."""
        if value < self.best:
            self.best, self.best_epoch, self.wait = value, epoch, 0
            return True, False
        self.wait += 1
        return False, self.wait >= self.patience


def evaluate(net: LstmNetwork, data: Dataset) -> float:
    return loss(net.loss_id, data.targets, predict(net, data.inputs), data.reference)


def train(
    net: LstmNetwork,
    train_set: Dataset,
    val_set: Dataset,
    max_epochs: int = 50,
    patience: int = 5,
    seed: int = 0,
    learning_rate: float | None = None,
    batch_size: int = 32,
) -> TrainReport:
    """Mini-batch SGD with per-epoch validation and best-weight restoration.

    ``net`` is updated in place and ends holding the weights of the epoch with
    the lowest validation loss. Epochs are numbered from 1. The train curve
    holds the epoch's running mean of the optimised objective; the validation
    curve holds the exact loss (MADL with the true sign).
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation sets must be non-empty")
    if learning_rate is None:
        learning_rate = net.hyperparams.learning_rate if net.hyperparams is not None else 1e-3
    rng = np.random.default_rng(seed)
    report = TrainReport()
    stopper = EarlyStopping(patience)
    best_weights = net.get_weights()
    params = net.params()
    n = len(train_set)
    # overflow on a diverging run is caught below as a non-finite loss
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, max_epochs + 1):
            order = rng.permutation(n)
            batch_losses = []
            for start in range(0, n, batch_size):
                batch = train_set.subset(order[start:start + batch_size])
                masks = draw_masks(net, len(batch), rng)
                value, grads = backward(net, batch.inputs, batch.targets, batch.reference, masks)
                if not np.isfinite(value):
                    raise TrainingDivergedError(epoch)
                for p, g in zip(params, grads):
                    p -= learning_rate * g
                batch_losses.append(value * len(batch))
            train_loss = sum(batch_losses) / n
            val_loss = evaluate(net, val_set)
            if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
                raise TrainingDivergedError(epoch)
            report.train_loss_curve.append(train_loss)
            report.val_loss_curve.append(val_loss)
            report.epochs_run = epoch
            improved, stop = stopper.update(epoch, val_loss)
            if improved:
                best_weights = net.get_weights()
            if stop:
                break
    net.set_weights(best_weights)
    report.best_epoch = stopper.best_epoch
    report.best_val_loss = stopper.best
    return report
