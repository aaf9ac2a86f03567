import warnings

import numpy as np

from ..errors import SingularDesign
from .base import TrainedModel

RIDGE_FALLBACK = 1e-8


class LinearModel(TrainedModel):
    kind = "linear"

    def __init__(self, coef, intercept, ridge=0.0):
        coef = np.asarray(coef, dtype=float)
        super().__init__(coef.shape[0])
        self.coef = coef
        self.intercept = float(intercept)
        self.ridge = ridge

    def _predict(self, X):
        # row-wise sum rather than a BLAS product: a row's prediction never depends on the batch
        return (X * self.coef).sum(axis=1) + self.intercept

    def _gradient(self, X):
        return np.broadcast_to(self.coef, X.shape).copy()

    def to_dict(self):
        return {"kind": self.kind, "coef": self.coef.tolist(), "intercept": self.intercept, "ridge": self.ridge}


def fit_linear(train):
    """Ordinary least squares through a QR factorization of ``[1, X]``.

    A rank-deficient design emits :class:`SingularDesign` and falls back to a
    ridge penalty of 1e-8 on the slopes.
    """
    X, y = train.features, train.targets
    n, d = X.shape
    if n <= d:
        raise ValueError(f"need n > d for least squares, got n={n}, d={d}")
    A = np.column_stack([np.ones(n), X])
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    if diag.min() <= max(n, d + 1) * np.finfo(float).eps * diag.max():
        warnings.warn(f"rank-deficient design; ridge {RIDGE_FALLBACK} applied", SingularDesign, stacklevel=2)
        P = np.eye(d + 1) * RIDGE_FALLBACK
        P[0, 0] = 0.0
        beta = np.linalg.solve(A.T @ A + P, A.T @ y)
        return LinearModel(beta[1:], beta[0], ridge=RIDGE_FALLBACK)
    beta = np.linalg.solve(R, Q.T @ y)
    return LinearModel(beta[1:], beta[0])
