from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

METHODS = ("gradient", "smoothgrad_knn", "ale_knn", "lime", "kernel_shap")


@dataclass(frozen=True)
class ExplainerConfig:
    method: str
    k: int = 10
    ale_bins: int = 50
    ale_sigma_sq: float = 0.2
    lime_samples: int = 5000
    lime_kernel_width_factor: float = 0.75
    lime_ridge_penalty: float = 1.0
    # True: quartile-binned perturbations with binary surrogate features.
    # False: continuous Gaussian perturbations around the instance.
    lime_discretize: bool = True
    shap_background_size: int = 100
    # None means 2048 + 2 d, resolved once d is known
    shap_coalition_budget: int | None = None
    shap_max_enumerate_dim: int = 11
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown explainer {self.method!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.ale_bins < 2:
            raise ValueError("ale_bins must be >= 2")
        if self.shap_background_size < 1:
            raise ValueError("shap_background_size must be >= 1")

    @property
    def name(self):
        return self.method

    def coalition_budget(self, d):
        return 2048 + 2 * d if self.shap_coalition_budget is None else self.shap_coalition_budget

    def lime_kernel_width(self, d):
        return self.lime_kernel_width_factor * np.sqrt(d)


@dataclass
class Explanation:
    weights: np.ndarray
    method: str
    wall_time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 2:
            raise ValueError("explanation weights must be an (n, d) matrix")
        if not np.isfinite(self.weights).all():
            raise ValueError(f"{self.method} produced non-finite attributions")


def sample_rng(seed, index):
    """Independent RNG stream for one evaluation sample."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**63 - 1), int(index)]))


def write_csv(explanation, path, sample_ids=None):
    W = explanation.weights
    ids = range(len(W)) if sample_ids is None else sample_ids
    with open(path, "w") as fh:
        fh.write(",".join(["sample_id", "method"] + [f"w_{j + 1}" for j in range(W.shape[1])]) + "\n")
        for i, row in zip(ids, W):
            fh.write(",".join([str(i), explanation.method] + [repr(float(v)) for v in row]) + "\n")
