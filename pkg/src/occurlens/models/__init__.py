from .base import (
    GBDTParams,
    Hyperparams,
    MLPParams,
    TrainedModel,
    load_model,
    model_from_dict,
    params_from_dict,
    predict_proba,
    save_model,
)
from .gbdt import GBDTModel, fit_gbdt, train_gbdt
from .mlp import MLPModel, fit_mlp, train_mlp
from .prior import PriorModel, fit_prior, train_prior
from .tuning import tune_random_search

__all__ = [
    "GBDTModel",
    "GBDTParams",
    "Hyperparams",
    "MLPModel",
    "MLPParams",
    "PriorModel",
    "TrainedModel",
    "fit_gbdt",
    "fit_mlp",
    "fit_prior",
    "load_model",
    "model_from_dict",
    "params_from_dict",
    "predict_proba",
    "save_model",
    "train_gbdt",
    "train_mlp",
    "train_prior",
    "tune_random_search",
]
