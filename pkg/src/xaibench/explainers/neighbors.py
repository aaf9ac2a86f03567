import numpy as np

from ..errors import PoolTooSmall

_CHUNK = 512


def _scales(pool, ranges):
    if ranges is None:
        ranges = pool.max(axis=0) - pool.min(axis=0)
    ranges = np.asarray(ranges, dtype=float)
    return np.where(ranges > 0, ranges, 1.0)


def knn_indices(pool, X, k, ranges=None):
    """Indices of the ``k`` nearest pool rows for every row of ``X``.

    Distances are Euclidean after dividing each column by its range (the pool's
    own range unless ``ranges`` is given). Ties go to the lower pool index.
    """
    pool = np.asarray(pool, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(pool) < k:
        raise PoolTooSmall(f"pool has {len(pool)} rows, need k={k}")
    scale = _scales(pool, ranges)
    P = pool / scale
    out = np.empty((len(X), k), dtype=np.int64)
    for s in range(0, len(X), _CHUNK):
        Q = X[s : s + _CHUNK] / scale
        D = ((Q[:, None, :] - P[None, :, :]) ** 2).sum(axis=2)
        out[s : s + _CHUNK] = np.argsort(D, axis=1, kind="stable")[:, :k]
    return out


def knn_query(pool, x, k, ranges=None):
    return knn_indices(pool, np.asarray(x, dtype=float)[None, :], k, ranges)[0]
