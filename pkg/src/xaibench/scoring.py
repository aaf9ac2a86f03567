"""Ground-truth alignment score for local attributions.

Attributions and true gradients go through the same pipeline: multiply by the
input values, min-max normalize every row to [0, 1], then compare the two with
a per-row Brier score. ``s = 1 - mean Brier`` is 1 for perfect alignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ZeroVariance

DEGENERATE_SPAN = 1e-12


@dataclass
class ScoreReport:
    s: float
    per_sample: np.ndarray
    r2: float = float("nan")
    n: int = 0
    percentile_10: float = float("nan")
    percentile_90: float = float("nan")

    def __post_init__(self):
        if not (0.0 <= self.s <= 1.0):
            raise ValueError(f"score {self.s} outside [0, 1]")


def _pair(A, B):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape:
        raise DimensionMismatch(f"shapes differ: {A.shape} vs {B.shape}")
    return A, B


def scale_by_input(W, X):
    W, X = _pair(W, X)
    return W * X


def minmax_rows(W):
    """Map each row onto [0, 1]; rows with span below 1e-12 become all 0.5."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    lo = W.min(axis=1, keepdims=True)
    span = W.max(axis=1, keepdims=True) - lo
    flat = span < DEGENERATE_SPAN
    out = (W - lo) / np.where(flat, 1.0, span)
    out = np.where(flat, 0.5, out)
    # guard the last ulp so the output range is closed
    return np.clip(out, 0.0, 1.0)


def brier_rows(A, B):
    A, B = _pair(A, B)
    return ((A - B) ** 2).mean(axis=1)


def normalized(W, X):
    return minmax_rows(scale_by_input(W, X))


def score(W, ds_eval):
    """Score an attribution matrix (or Explanation) against ``ds_eval.true_gradients``."""
    W = getattr(W, "weights", W)
    X = ds_eval.features
    W = np.asarray(W, dtype=float)
    if W.shape != X.shape:
        raise DimensionMismatch(f"attributions {W.shape} do not match evaluation set {X.shape}")
    per_sample = brier_rows(normalized(W, X), normalized(ds_eval.true_gradients, X))
    return ScoreReport(s=float(1.0 - per_sample.mean()), per_sample=per_sample, n=len(per_sample))


def r2(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise DimensionMismatch(f"lengths differ: {y_true.shape} vs {y_pred.shape}")
    if len(y_true) < 2:
        raise ValueError("r2 needs at least two samples")
    ss_tot = ((y_true - y_true.mean()) ** 2).sum()
    if ss_tot <= 0:
        raise ZeroVariance("y_true has zero variance")
    return float(1.0 - ((y_true - y_pred) ** 2).sum() / ss_tot)


def infidelity(m, w, x, sigma_I, n_mc=1000, seed=0):
    """Monte-Carlo E[(I.w - (f(x) - f(x - I)))^2] with I ~ N(0, diag(sigma_I^2))."""
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    rng = np.random.default_rng(seed)
    I = rng.standard_normal((n_mc, len(x))) * np.asarray(sigma_I, dtype=float)
    fx = m.predict(x[None, :])[0]
    resid = I @ w - (fx - m.predict(x[None, :] - I))
    return float(np.mean(resid**2))
