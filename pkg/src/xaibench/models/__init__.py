"""Black-box regressors with a uniform predict/gradient surface."""

from .base import FunctionModel, GBDTParams, MLPParams, ModelConfig, TrainedModel, model_gradient, predict
from .gbdt import GBDTModel, fit_gbdt
from .linear import LinearModel, fit_linear
from .mlp import MLPEnsemble, fit_mlp_ensemble


def fit(train, cfg):
    """Fit the model kind named by ``cfg``."""
    if cfg.kind == "linear":
        return fit_linear(train)
    if cfg.kind == "mlp_ensemble":
        return fit_mlp_ensemble(train, cfg)
    return fit_gbdt(train, cfg)


__all__ = [
    "FunctionModel",
    "GBDTModel",
    "GBDTParams",
    "LinearModel",
    "MLPEnsemble",
    "MLPParams",
    "ModelConfig",
    "TrainedModel",
    "fit",
    "fit_gbdt",
    "fit_linear",
    "fit_mlp_ensemble",
    "model_gradient",
    "predict",
]
