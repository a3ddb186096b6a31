from .gp import GPModel, GPNumericalError, default_hyper_grid, gp_fit, gp_posterior, gp_predict
from .mdn import (
    MDNModel,
    MixturePosterior,
    TrainConfig,
    TrainResult,
    TrainingDivergedError,
    fit_mixture_em,
    mdn_forward,
    mixture_nll,
    mixture_sample,
    train,
)
from .net import Adam, Dense, RKHSFrontend, Tanh
from .regressor import RegressorModel, regressor_posterior, regressor_train

__all__ = [
    "Adam",
    "Dense",
    "GPModel",
    "GPNumericalError",
    "MDNModel",
    "MixturePosterior",
    "RKHSFrontend",
    "RegressorModel",
    "Tanh",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "default_hyper_grid",
    "fit_mixture_em",
    "gp_fit",
    "gp_posterior",
    "gp_predict",
    "mdn_forward",
    "mixture_nll",
    "mixture_sample",
    "regressor_posterior",
    "regressor_train",
    "train",
]
