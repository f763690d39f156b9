"""Hyperparameter records and the search space they are drawn from."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

ACTIVATIONS = ("tanh", "relu", "sigmoid")
LOSSES = ("mse", "mae", "madl")
MAX_LSTM_LAYERS = 3
MAX_DENSE_LAYERS = 3


@dataclass(frozen=True)
class HyperParams:
    """One network configuration.

    Per-layer fields always carry three slots (the maximum depth). Only the
    first ``n_lstm_layers`` / ``n_dense_layers`` slots shape the network; the
    rest are recorded the way a tuner reports them.
    """

    n_lstm_layers: int = 1
    lstm_units: tuple = (32, 32, 32)
    lstm_activations: tuple = ("tanh", "tanh", "tanh")
    recurrent_dropouts: tuple = (0.0, 0.0, 0.0)
    n_dense_layers: int = 0
    dense_units: tuple = (32, 32, 32)
    dense_activations: tuple = ("relu", "relu", "relu")
    dropout: float = 0.0
    learning_rate: float = 1e-3
    loss: str = "mse"

    def __post_init__(self):
        for name in ("lstm_units", "lstm_activations", "recurrent_dropouts", "dense_units", "dense_activations"):
            value = tuple(getattr(self, name))
            if len(value) != MAX_LSTM_LAYERS:
                raise ValueError(f"{name} needs exactly {MAX_LSTM_LAYERS} slots, got {len(value)}")
            object.__setattr__(self, name, value)
        if not 1 <= self.n_lstm_layers <= MAX_LSTM_LAYERS:
            raise ValueError(f"n_lstm_layers must be 1..{MAX_LSTM_LAYERS}")
        if not 0 <= self.n_dense_layers <= MAX_DENSE_LAYERS:
            raise ValueError(f"n_dense_layers must be 0..{MAX_DENSE_LAYERS}")
        if any(int(u) < 1 for u in self.lstm_units + self.dense_units):
            raise ValueError("unit counts must be positive")
        for act in self.lstm_activations + self.dense_activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        if any(not 0 <= p < 1 for p in self.recurrent_dropouts) or not 0 <= self.dropout < 1:
            raise ValueError("dropout rates must lie in [0, 1)")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")

    def active_lstm(self):
        n = self.n_lstm_layers
        return list(zip(self.lstm_units[:n], self.lstm_activations[:n], self.recurrent_dropouts[:n]))

    def active_dense(self):
        n = self.n_dense_layers
        return list(zip(self.dense_units[:n], self.dense_activations[:n]))

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "HyperParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter fields: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})

    def key(self) -> tuple:
        return tuple(tuple(v) if isinstance(v, (list, tuple)) else v for v in asdict(self).values())


@dataclass(frozen=True)
class HyperSpace:
    """Discrete ranges to sample from; defaults reproduce the tuning grid used for the volatility models."""

    n_lstm_layers: tuple = (1, 2, 3)
    n_dense_layers: tuple = (0, 1, 2, 3)
    units: tuple = (32, 64, 128)
    learning_rates: tuple = (1e-4, 5e-4, 1e-3, 5e-3, 1e-2)
    activations: tuple = ("tanh", "relu", "sigmoid")
    recurrent_dropouts: tuple = (0.0, 0.05, 0.1, 0.15, 0.2)
    dropouts: tuple = (0.0, 0.05, 0.1, 0.15, 0.2)
    losses: tuple = ("mse", "mae")

    def size(self) -> int:
        """Number of distinct HyperParams this space can produce."""
        slots = 3
        per_lstm = len(self.units) * len(self.activations) * len(self.recurrent_dropouts)
        per_dense = len(self.units) * len(self.activations)
        return (
            len(self.n_lstm_layers)
            * len(self.n_dense_layers)
            * per_lstm**slots
            * per_dense**slots
            * len(self.learning_rates)
            * len(self.dropouts)
            * len(self.losses)
        )

    def sample(self, rng: np.random.Generator) -> HyperParams:
        def pick(options, n=None):
            if n is None:
                return options[int(rng.integers(len(options)))]
            return tuple(options[int(i)] for i in rng.integers(len(options), size=n))

        return HyperParams(
            n_lstm_layers=int(pick(self.n_lstm_layers)),
            lstm_units=tuple(int(u) for u in pick(self.units, 3)),
            lstm_activations=pick(self.activations, 3),
            recurrent_dropouts=tuple(float(p) for p in pick(self.recurrent_dropouts, 3)),
            n_dense_layers=int(pick(self.n_dense_layers)),
            dense_units=tuple(int(u) for u in pick(self.units, 3)),
            dense_activations=pick(self.activations, 3),
            dropout=float(pick(self.dropouts)),
            learning_rate=float(pick(self.learning_rates)),
            loss=str(pick(self.losses)),
        )

    def contains(self, hp: HyperParams) -> bool:
        return (
            hp.n_lstm_layers in self.n_lstm_layers
            and hp.n_dense_layers in self.n_dense_layers
            and all(u in self.units for u in hp.lstm_units + hp.dense_units)
            and all(a in self.activations for a in hp.lstm_activations + hp.dense_activations)
            and all(any(math.isclose(p, q) for q in self.recurrent_dropouts) for p in hp.recurrent_dropouts)
            and any(math.isclose(hp.dropout, q) for q in self.dropouts)
            and any(math.isclose(hp.learning_rate, q) for q in self.learning_rates)
            and hp.loss in self.losses
        )

    @classmethod
    def from_dict(cls, data: dict) -> "HyperSpace":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown search-space fields: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in data.items()})

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class TrainSettings:
    max_epochs: int = 50
    patience: int = 5
    batch_size: int = 32

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ValueError("max_epochs, patience and batch_size must be positive")


TUNING = TrainSettings(max_epochs=50, patience=5)
FINAL = TrainSettings(max_epochs=100, patience=10)

__all__ = ["HyperParams", "HyperSpace", "TrainSettings", "TUNING", "FINAL", "ACTIVATIONS", "LOSSES"]
