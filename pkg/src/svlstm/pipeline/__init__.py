from .experiment import (
    ExperimentPlan,
    ExperimentResult,
    WindowResult,
    build_features,
    load_sv_forecasts,
    read_forecasts,
    run_experiment,
    write_forecasts,
    write_sv_forecasts,
)
from .features import (
    FeatureMatrix,
    Window,
    WindowPlan,
    assemble_hybrid_features,
    make_sequences,
    split_windows,
)
from .scalers import Scaler, fit_scaler, inverse_transform, transform

__all__ = [
    "ExperimentPlan", "ExperimentResult", "WindowResult", "build_features", "load_sv_forecasts",
    "read_forecasts", "run_experiment", "write_forecasts", "write_sv_forecasts",
    "FeatureMatrix", "Window", "WindowPlan", "assemble_hybrid_features", "make_sequences", "split_windows",
    "Scaler", "fit_scaler", "inverse_transform", "transform",
]
