from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch

KINDS = ("linear", "mlp_ensemble", "gbdt")


@dataclass(frozen=True)
class MLPParams:
    members: int = 4
    layers: int = 3
    width: int = 32
    activation: str = "relu"
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 64


@dataclass(frozen=True)
class GBDTParams:
    trees: int = 100
    learning_rate: float = 0.1
    max_leaves: int = 31
    min_samples_leaf: int = 20
    fd_step: float = 1e-3


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    mlp: MLPParams = field(default_factory=MLPParams)
    gbdt: GBDTParams = field(default_factory=GBDTParams)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.mlp.members < 1 or self.mlp.width < 1 or self.mlp.layers < 1:
            raise ValueError("mlp members, layers and width must be >= 1")
        if self.mlp.activation != "relu":
            raise ValueError("only relu activation is supported")
        if self.gbdt.trees < 1 or self.gbdt.max_leaves < 2 or self.gbdt.min_samples_leaf < 1:
            raise ValueError("gbdt needs trees >= 1, max_leaves >= 2, min_samples_leaf >= 1")

    @property
    def name(self):
        return self.kind


class TrainedModel:
    """Common surface of every fitted regressor.

    Subclasses implement ``_predict`` and ``_gradient`` on validated
    ``(n, d)`` float arrays; gradients are in original feature units.
    """

    kind = "model"

    def __init__(self, n_features):
        self.n_features = int(n_features)

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got shape {X.shape}")
        return X

    def predict(self, X):
        return self._predict(self._check(X))

    def gradient(self, X):
        return self._gradient(self._check(X))

    def to_dict(self):
        raise NotImplementedError


def predict(m, X):
    """Row-wise predictions of ``m`` for the matrix ``X``."""
    return m.predict(X)


def model_gradient(m, x):
    """Gradient of ``m`` at a single point ``x`` (a d-vector)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch(f"expected a single d-vector, got shape {x.shape}")
    return m.gradient(x[None, :])[0]


class FunctionModel(TrainedModel):
    """Wraps a known function and its analytic gradient (used as an oracle)."""

    kind = "oracle"

    def __init__(self, value, gradient, n_features):
        super().__init__(n_features)
        self._value = value
        self._grad = gradient

    def _predict(self, X):
        return np.asarray(self._value(X), dtype=float)

    def _gradient(self, X):
        return np.asarray(self._grad(X), dtype=float)

    def to_dict(self):
        return {"kind": self.kind, "n_features": self.n_features}
