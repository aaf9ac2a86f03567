"""Gradient-boosted regression trees with leaf-wise growth.

Squared-error loss, so every tree is fit to the current residuals and a leaf
outputs the mean residual of its samples. Trees grow best-first: the leaf with
the largest variance reduction is split next, up to ``max_leaves`` leaves.
The model is piecewise constant, so its gradient is a central finite
difference with step ``fd_step * range_j``; it is zero unless the step
straddles a split threshold.
"""

import numba
import numpy as np

from .base import TrainedModel

_TABLE_MIN_ROWS = 200_000
_TABLE_MAX_CELLS = 8_000_000


@numba.njit(cache=True)
def _best_split(X, order, node_of, node, r, min_leaf, n_node, sum_node):
    n, d = X.shape
    best_gain, best_f, best_thr = 0.0, -1, 0.0
    parent = sum_node * sum_node / n_node
    for f in range(d):
        cnt = 0
        s = 0.0
        prev = 0.0
        for k in range(n):
            i = order[k, f]
            if node_of[i] != node:
                continue
            v = X[i, f]
            if cnt >= min_leaf and n_node - cnt >= min_leaf and v > prev:
                rest = sum_node - s
                gain = s * s / cnt + rest * rest / (n_node - cnt) - parent
                if gain > best_gain:
                    thr = 0.5 * (prev + v)
                    if thr >= v:
                        thr = prev
                    best_gain, best_f, best_thr = gain, f, thr
            cnt += 1
            s += r[i]
            prev = v
    return best_gain, best_f, best_thr


@numba.njit(cache=True)
def _predict_trees(X, feature, threshold, left, right, value):
    n = X.shape[0]
    T = feature.shape[0]
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for t in range(T):
            node = 0
            while feature[t, node] >= 0:
                if X[i, feature[t, node]] <= threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            acc += value[t, node]
        out[i] = acc
    return out


class Tree:
    """Flat binary tree; ``feature == -1`` marks a leaf."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    @property
    def n_leaves(self):
        return int((self.feature < 0).sum())

    def predict(self, X):
        return _predict_trees(
            np.ascontiguousarray(X, dtype=float),
            self.feature[None],
            self.threshold[None],
            self.left[None],
            self.right[None],
            self.value[None],
        )

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}


def grow_tree(X, order, r, max_leaves, min_leaf):
    """Grow one regression tree on residuals ``r`` (best-first)."""
    n = len(r)
    node_of = np.zeros(n, dtype=np.int64)
    feature, threshold, left, right = [-1], [0.0], [-1], [-1]
    count = {0: n}
    total = {0: float(r.sum())}
    cand = {0: _best_split(X, order, node_of, 0, r, min_leaf, n, total[0])}
    n_leaves = 1
    while n_leaves < max_leaves and cand:
        node = max(cand, key=lambda k: (cand[k][0], -k))
        gain, f, thr = cand.pop(node)
        if f < 0 or gain <= 0.0:
            break
        members = node_of == node
        goes_left = members & (X[:, f] <= thr)
        goes_right = members & ~goes_left
        lo, hi = len(feature), len(feature) + 1
        feature[node], threshold[node], left[node], right[node] = f, thr, lo, hi
        feature += [-1, -1]
        threshold += [0.0, 0.0]
        left += [-1, -1]
        right += [-1, -1]
        node_of[goes_left] = lo
        node_of[goes_right] = hi
        for child, mask in ((lo, goes_left), (hi, goes_right)):
            count[child] = int(mask.sum())
            total[child] = float(r[mask].sum())
            cand[child] = _best_split(X, order, node_of, child, r, min_leaf, count[child], total[child])
        n_leaves += 1
    sums = np.bincount(node_of, weights=r, minlength=len(feature))
    counts = np.bincount(node_of, minlength=len(feature))
    value = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    value[np.asarray(feature) >= 0] = 0.0
    return Tree(feature, threshold, left, right, value), node_of


class GBDTModel(TrainedModel):
    kind = "gbdt"

    def __init__(self, trees, base_score, learning_rate, fd_steps):
        self.fd_steps = np.asarray(fd_steps, dtype=float)
        super().__init__(len(self.fd_steps))
        self.trees = list(trees)
        self.base_score = float(base_score)
        self.learning_rate = float(learning_rate)
        width = max(len(t.feature) for t in self.trees)

        def pad(attr, fill):
            out = np.full((len(self.trees), width), fill, dtype=getattr(self.trees[0], attr).dtype)
            for i, t in enumerate(self.trees):
                a = getattr(t, attr)
                out[i, : len(a)] = a
            return out

        self._feature = pad("feature", -1)
        self._threshold = pad("threshold", 0.0)
        self._left = pad("left", -1)
        self._right = pad("right", -1)
        self._value = pad("value", 0.0) * self.learning_rate
        self._table = None

    def _build_table(self):
        """Dense lookup of the ensemble on the grid cut out by all thresholds.

        Leaf values are added rectangle by rectangle in tree order, so every
        cell holds the same floating-point sum a traversal would produce.
        """
        d = self.n_features
        cuts = [np.unique(self._threshold[self._feature == j]) for j in range(d)]
        table = np.zeros(tuple(len(c) + 1 for c in cuts))
        for t in range(len(self.trees)):
            stack = [(0, [0] * d, list(table.shape))]
            while stack:
                node, lo, hi = stack.pop()
                f = self._feature[t, node]
                if f < 0:
                    table[tuple(slice(a, b) for a, b in zip(lo, hi))] += self._value[t, node]
                    continue
                m = int(np.searchsorted(cuts[f], self._threshold[t, node]))
                lhi, rlo = list(hi), list(lo)
                lhi[f] = min(hi[f], m + 1)
                rlo[f] = max(lo[f], m + 1)
                if lo[f] < lhi[f]:
                    stack.append((self._left[t, node], lo, lhi))
                if rlo[f] < hi[f]:
                    stack.append((self._right[t, node], rlo, hi))
        self._table = (cuts, table)

    def _table_size(self):
        size = 1
        for j in range(self.n_features):
            size *= len(np.unique(self._threshold[self._feature == j])) + 1
        return size

    def _predict(self, X):
        X = np.ascontiguousarray(X)
        if self._table is None and len(X) >= _TABLE_MIN_ROWS and self._table_size() <= _TABLE_MAX_CELLS:
            self._build_table()
        if self._table is not None:
            cuts, table = self._table
            codes = tuple(np.searchsorted(c, X[:, j], side="left") for j, c in enumerate(cuts))
            return table[codes] + self.base_score
        raw = _predict_trees(X, self._feature, self._threshold, self._left, self._right, self._value)
        return raw + self.base_score

    def _gradient(self, X):
        n, d = X.shape
        steps = np.zeros((2 * d, d))
        for j in range(d):
            steps[2 * j, j] = self.fd_steps[j]
            steps[2 * j + 1, j] = -self.fd_steps[j]
        probes = (X[None, :, :] + steps[:, None, :]).reshape(-1, d)
        f = self._predict(probes).reshape(2 * d, n)
        safe = np.where(self.fd_steps > 0, self.fd_steps, 1.0)
        G = (f[0::2] - f[1::2]).T / (2.0 * safe)
        return np.where(self.fd_steps > 0, G, 0.0)

    def to_dict(self):
        return {
            "kind": self.kind,
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "fd_steps": self.fd_steps.tolist(),
            "trees": [t.to_dict() for t in self.trees],
        }


def fit_gbdt(train, cfg):
    p = cfg.gbdt
    X = np.ascontiguousarray(train.features, dtype=float)
    y = train.targets
    if len(y) < 2 * p.min_samples_leaf:
        raise ValueError(f"need at least {2 * p.min_samples_leaf} rows, got {len(y)}")
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable"))
    base = float(y.mean())
    F = np.full(len(y), base)
    trees = []
    for _ in range(p.trees):
        tree, node_of = grow_tree(X, order, y - F, p.max_leaves, p.min_samples_leaf)
        F = F + p.learning_rate * tree.value[node_of]
        trees.append(tree)
    return GBDTModel(trees, base, p.learning_rate, p.fd_step * train.feature_ranges)
