from .hyperparams import FINAL, TUNING, HyperParams, HyperSpace, TrainSettings
from .network import (
    DenseLayer,
    LstmLayerWeights,
    LstmNetwork,
    backward,
    forward,
    from_json,
    init_network,
    loss,
    lstm_cell_step,
    predict,
    to_json,
    training_loss,
)
from .search import SearchResult, random_search
from .training import Dataset, EarlyStopping, TrainReport, sgd_step, train

__all__ = [
    "FINAL", "TUNING", "HyperParams", "HyperSpace", "TrainSettings",
    "DenseLayer", "LstmLayerWeights", "LstmNetwork", "backward", "forward", "from_json",
    "init_network", "loss", "lstm_cell_step", "predict", "to_json", "training_loss",
    "SearchResult", "random_search",
    "Dataset", "EarlyStopping", "TrainReport", "sgd_step", "train",
]
