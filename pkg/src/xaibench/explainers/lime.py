"""LIME: weighted ridge surrogates on perturbations around each instance.

Two perturbation schemes are available.

Discretized (the reference tabular default): every feature is cut at its
training quartiles. Perturbations draw a bin per feature from the training bin
frequencies and a value inside that bin from a truncated normal fitted to the
training rows of the bin. The surrogate sees binary features ("same bin as the
instance"), so its coefficients are bin-membership importances, not slopes.

Continuous: Gaussian perturbations around the instance with the training
standard deviations. The surrogate is fit on standardized offsets and its
coefficients are mapped back to original feature units.

Both weight perturbations with ``exp(-dist**2 / width**2)`` on the surrogate's
input coordinates and fit a ridge surrogate with unpenalized intercept. No
feature selection.
"""

import time
import warnings

import numpy as np
from scipy.special import ndtr, ndtri

from ..errors import SurrogateSingular
from .base import Explanation, sample_rng

_ROWS_PER_CHUNK = 200_000
_MAX_DOUBLINGS = 10


def _ridge(U, f, w, alpha):
    """Weighted ridge with unpenalized intercept, batched over samples."""
    sw = w.sum(axis=1, keepdims=True)
    mu_u = np.einsum("cs,csd->cd", w, U) / sw
    mu_f = (w * f).sum(axis=1, keepdims=True) / sw
    Uc = U - mu_u[:, None, :]
    UwT = np.swapaxes(Uc * w[:, :, None], 1, 2)
    A = UwT @ Uc
    b = (UwT @ (f - mu_f)[:, :, None])[:, :, 0]
    d = U.shape[2]
    out = np.empty_like(b)
    for c in range(len(A)):
        lam = alpha
        for attempt in range(_MAX_DOUBLINGS + 1):
            M = A[c] + lam * np.eye(d)
            try:
                if np.linalg.cond(M) > 1e12:
                    raise np.linalg.LinAlgError("ill-conditioned surrogate system")
                out[c] = np.linalg.solve(M, b[c])
                break
            except np.linalg.LinAlgError:
                if attempt == _MAX_DOUBLINGS:
                    raise
                lam = 2.0 * lam if lam > 0 else 1e-8
                warnings.warn(f"surrogate singular; ridge penalty raised to {lam}", SurrogateSingular, stacklevel=3)
    return out


class QuartileBins:
    """Per-feature quartile bins with the training mean/std inside each bin."""

    def __init__(self, train_features):
        T = np.asarray(train_features, dtype=float)
        self.edges, self.cdf, self.lo, self.hi, self.mean, self.std = [], [], [], [], [], []
        for col in T.T:
            edges = np.unique(np.percentile(col, [25, 50, 75]))
            b = np.searchsorted(edges, col)
            nb = len(edges) + 1
            counts = np.bincount(b, minlength=nb).astype(float)
            self.edges.append(edges)
            cdf = counts.cumsum()
            self.cdf.append(cdf / cdf[-1])
            self.lo.append(np.concatenate([[col.min()], edges]))
            self.hi.append(np.concatenate([edges, [col.max()]]))
            self.mean.append(np.array([col[b == k].mean() if counts[k] else 0.0 for k in range(nb)]))
            self.std.append(np.array([col[b == k].std() + 1e-11 if counts[k] else 1.0 for k in range(nb)]))
        # truncation bounds of each bin on the standard-normal CDF scale
        self.cdf_lo = [ndtr((lo - m) / s) for lo, m, s in zip(self.lo, self.mean, self.std)]
        self.cdf_hi = [ndtr((hi - m) / s) for hi, m, s in zip(self.hi, self.mean, self.std)]

    def bin_of(self, X):
        X = np.asarray(X, dtype=float)
        return np.stack([np.searchsorted(e, X[..., j]) for j, e in enumerate(self.edges)], axis=-1)

    def draw_block(self, X, S, rngs):
        """``S`` rows per instance of ``X`` (the instance first), plus their binary same-bin encoding.

        Instance ``i`` draws only from ``rngs[i]``: per feature, ``S`` uniforms
        pick a bin from the training bin frequencies and ``S`` more place the
        value inside the bin by a truncated-normal inverse CDF.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n, d = X.shape
        U = np.stack([rng.random((d, 2, S)) for rng in rngs])
        bins = np.empty((n, S, d), dtype=np.int64)
        Z = np.empty((n, S, d))
        for j in range(d):
            k = np.searchsorted(self.cdf[j], U[:, j, 0], side="right")
            bins[:, :, j] = k
            pa, pb = self.cdf_lo[j][k], self.cdf_hi[j][k]
            Z[:, :, j] = self.mean[j][k] + self.std[j][k] * ndtri(pa + U[:, j, 1] * (pb - pa))
        Z[:, 0] = X
        binary = (bins == self.bin_of(X)[:, None, :]).astype(float)
        binary[:, 0] = 1.0
        return Z, binary

    def draw(self, x, S, rng):
        Z, binary = self.draw_block(np.asarray(x, dtype=float)[None, :], S, [rng])
        return Z[0], binary[0]


def explain_lime(m, X_eval, train_stats, cfg, train_features=None):
    """``train_stats`` is ``(mean, std)`` of the training features.

    The discretized scheme also needs the raw ``train_features`` for its bins.
    """
    t0 = time.perf_counter()
    X_eval = np.atleast_2d(np.asarray(X_eval, dtype=float))
    _, std = (np.asarray(a, dtype=float) for a in train_stats)
    std = np.where(std > 0, std, 1.0)
    n, d = X_eval.shape
    S = cfg.lime_samples
    if S < d + 2:
        raise ValueError(f"lime_samples must be >= d + 2 = {d + 2}")
    if cfg.lime_discretize and train_features is None:
        raise ValueError("discretized LIME needs train_features")
    quartiles = QuartileBins(train_features) if cfg.lime_discretize else None
    width = cfg.lime_kernel_width(d)
    W = np.empty((n, d))
    per_chunk = max(1, _ROWS_PER_CHUNK // S)
    for s in range(0, n, per_chunk):
        block = range(s, min(n, s + per_chunk))
        if quartiles is None:
            U = np.stack([sample_rng(cfg.seed, i).standard_normal((S, d)) for i in block])
            Z = X_eval[block.start : block.stop, None, :] + U * std
            dist2 = (U**2).sum(axis=2)
        else:
            rngs = [sample_rng(cfg.seed, i) for i in block]
            Z, U = quartiles.draw_block(X_eval[block.start : block.stop], S, rngs)
            dist2 = ((U - 1.0) ** 2).sum(axis=2)
        f = m.predict(Z.reshape(-1, d)).reshape(len(block), S)
        coef = _ridge(U, f, np.exp(-dist2 / width**2), cfg.lime_ridge_penalty)
        W[block.start : block.stop] = coef if quartiles is not None else coef / std
    meta = {"discretized": quartiles is not None}
    return Explanation(W, "lime", time.perf_counter() - t0, meta)
