"""Local accumulated-local-effects on a kNN cohort.

For sample ``x`` and feature ``j`` the cohort's range along ``j`` is cut into
equal bins. Each cohort member contributes the finite-difference slope of the
model across the edges of the bin it falls in, with its other features held
fixed. Bin slopes are averaged per bin and combined with Gaussian weights
centred at ``x_j`` (variance ``sigma_sq * range_j**2``), normalized over the
non-empty bins. The result is a derivative-like effect per feature.
"""

import time
import warnings

import numpy as np

from ..errors import EmptyCohortFeature
from .base import Explanation
from .neighbors import knn_indices


def explain_ale_knn(m, X_eval, pool, cfg, feature_ranges=None):
    t0 = time.perf_counter()
    X_eval = np.atleast_2d(np.asarray(X_eval, dtype=float))
    pool = np.asarray(pool, dtype=float)
    n, d = X_eval.shape
    k, bins = cfg.k, cfg.ale_bins
    ranges = pool.max(axis=0) - pool.min(axis=0) if feature_ranges is None else np.asarray(feature_ranges, float)
    idx = knn_indices(pool, X_eval, k, feature_ranges)
    cohort = pool[idx]  # (n, k, d)

    W = np.zeros((n, d))
    empty = 0
    rows = np.arange(n)[:, None]
    for j in range(d):
        v = cohort[:, :, j]
        lo, hi = v.min(axis=1), v.max(axis=1)
        span = hi - lo
        ok = span > 0
        empty += int((~ok).sum())
        width = np.where(ok, span / bins, 1.0)
        b = np.clip(np.floor((v - lo[:, None]) / width[:, None]).astype(np.int64), 0, bins - 1)
        left_edge = lo[:, None] + b * width[:, None]
        right_edge = left_edge + width[:, None]
        lower, upper = cohort.copy(), cohort.copy()
        lower[:, :, j] = left_edge
        upper[:, :, j] = right_edge
        f_lo = m.predict(lower.reshape(-1, d)).reshape(n, k)
        f_hi = m.predict(upper.reshape(-1, d)).reshape(n, k)
        slope = (f_hi - f_lo) / width[:, None]

        sums = np.zeros((n, bins))
        counts = np.zeros((n, bins))
        np.add.at(sums, (rows, b), slope)
        np.add.at(counts, (rows, b), 1.0)
        filled = counts > 0
        bin_slope = np.where(filled, sums / np.maximum(counts, 1.0), 0.0)

        centers = lo[:, None] + (np.arange(bins) + 0.5) * width[:, None]
        var = cfg.ale_sigma_sq * ranges[j] ** 2
        if var > 0:
            q = np.exp(-0.5 * (centers - X_eval[:, j : j + 1]) ** 2 / var)
        else:
            q = np.ones_like(centers)
        q = np.where(filled, q, 0.0)
        total = q.sum(axis=1, keepdims=True)
        # far-away cohorts can underflow every weight; fall back to uniform
        q = np.where(total > 0, q / np.where(total > 0, total, 1.0), filled / counts.astype(bool).sum(1, keepdims=True))
        W[:, j] = np.where(ok, (q * bin_slope).sum(axis=1), 0.0)
    if empty:
        warnings.warn(f"{empty} cohort/feature pairs had zero spread", EmptyCohortFeature, stacklevel=2)
    return Explanation(W, "ale_knn", time.perf_counter() - t0, {"empty_cohort_features": empty})
