import time

import numpy as np

from .base import Explanation
from .neighbors import knn_indices


def explain_gradient(m, X_eval):
    t0 = time.perf_counter()
    W = m.gradient(X_eval)
    return Explanation(W, "gradient", time.perf_counter() - t0)


def explain_smoothgrad(m, X_eval, pool, k=10, ranges=None):
    """Average the model gradient over the ``k`` nearest pool rows of each sample."""
    t0 = time.perf_counter()
    idx = knn_indices(pool, X_eval, k, ranges)
    G = m.gradient(np.asarray(pool, dtype=float))
    W = G[idx].mean(axis=1)
    return Explanation(W, "smoothgrad_knn", time.perf_counter() - t0)
