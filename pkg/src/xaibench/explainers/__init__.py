"""Local attribution methods evaluated by the benchmark."""

from .ale import explain_ale_knn
from .base import METHODS, ExplainerConfig, Explanation, write_csv
from .gradient import explain_gradient, explain_smoothgrad
from .lime import explain_lime
from .neighbors import knn_indices, knn_query
from .shap import exact_shapley, explain_kernel_shap, shap_background


def explain(cfg, model, X_eval, *, pool, train_features, feature_ranges=None):
    """Run the explainer named by ``cfg.method``.

    ``pool`` is the neighbour pool for the kNN methods; ``train_features``
    provides LIME's perturbation scales and the SHAP background.
    """
    if cfg.method == "gradient":
        return explain_gradient(model, X_eval)
    if cfg.method == "smoothgrad_knn":
        return explain_smoothgrad(model, X_eval, pool, cfg.k, feature_ranges)
    if cfg.method == "ale_knn":
        return explain_ale_knn(model, X_eval, pool, cfg, feature_ranges)
    if cfg.method == "lime":
        stats = (train_features.mean(axis=0), train_features.std(axis=0))
        return explain_lime(model, X_eval, stats, cfg, train_features)
    background = shap_background(train_features, cfg.shap_background_size, cfg.seed)
    return explain_kernel_shap(model, X_eval, background, cfg)


__all__ = [
    "METHODS",
    "ExplainerConfig",
    "Explanation",
    "exact_shapley",
    "explain",
    "explain_ale_knn",
    "explain_gradient",
    "explain_kernel_shap",
    "explain_lime",
    "explain_smoothgrad",
    "knn_indices",
    "knn_query",
    "shap_background",
    "write_csv",
]
