"""Shapley values of the interventional game over a background set.

``v(S)`` is the mean prediction when the features outside ``S`` are taken from
each background row. :func:`exact_shapley` enumerates all ``2^d`` coalitions
with factorial weights. :func:`explain_kernel_shap` solves the Shapley-kernel
weighted least-squares problem under the efficiency constraint, either over
every coalition or over a budgeted design that enumerates whole coalition
sizes while the budget allows and samples the rest.
"""

import math
import time
from itertools import combinations

import numpy as np

from ..errors import BudgetTooSmall, DimensionTooLarge
from .base import Explanation, sample_rng

_ROWS_PER_CALL = 400_000


def coalition_values(m, x, background, masks):
    """``v(S)`` for each boolean row of ``masks``."""
    masks = np.asarray(masks, dtype=bool)
    background = np.asarray(background, dtype=float)
    K, nb = len(masks), len(background)
    out = np.empty(K)
    step = max(1, _ROWS_PER_CALL // nb)
    for s in range(0, K, step):
        mk = masks[s : s + step]
        Z = np.where(mk[:, None, :], x[None, None, :], background[None, :, :])
        out[s : s + step] = m.predict(Z.reshape(-1, len(x))).reshape(len(mk), nb).mean(axis=1)
    return out


def _all_masks(d):
    codes = np.arange(2**d)
    return ((codes[:, None] >> np.arange(d)) & 1).astype(bool)


def exact_shapley(m, x, background):
    """Shapley values by full enumeration of the ``2^d`` coalitions."""
    x = np.asarray(x, dtype=float)
    d = len(x)
    if d > 12:
        raise DimensionTooLarge(f"exact enumeration limited to d <= 12, got {d}")
    masks = _all_masks(d)
    v = coalition_values(m, x, background, masks)
    sizes = masks.sum(axis=1)
    codes = np.arange(2**d)
    phi = np.zeros(d)
    for j in range(d):
        without = ~masks[:, j]
        s = sizes[without]
        weight = np.array([math.factorial(k) * math.factorial(d - k - 1) for k in s]) / math.factorial(d)
        phi[j] = (weight * (v[codes[without] | (1 << j)] - v[without])).sum()
    return phi


def _kernel_weight(d, s):
    return (d - 1) / (math.comb(d, s) * s * (d - s))


def full_design(d):
    """Every non-trivial coalition with its Shapley kernel weight."""
    masks = _all_masks(d)[1:-1]
    sizes = masks.sum(axis=1)
    return masks, np.array([_kernel_weight(d, s) for s in sizes])


def budget_design(d, budget, rng):
    """Coalitions and weights for a budget of ``budget`` model games.

    Sizes ``s`` and ``d - s`` are handled as pairs, from the outside in. A pair
    is enumerated exactly when the budget still covers all of its coalitions
    at their kernel share; the remaining sizes are sampled in complementary
    pairs and their weights rescaled to the leftover kernel mass.
    """
    n_sizes = math.ceil((d - 1) / 2)
    n_paired = (d - 1) // 2
    size_weight = np.array([(d - 1) / (s * (d - s)) for s in range(1, n_sizes + 1)])
    size_weight[:n_paired] *= 2
    size_weight /= size_weight.sum()

    masks, weights = [], []
    left = budget
    remaining = size_weight.copy()
    n_full = 0
    for s in range(1, n_sizes + 1):
        paired = s <= n_paired
        count = math.comb(d, s) * (2 if paired else 1)
        if left * remaining[s - 1] / count < 1.0 - 1e-8:
            break
        n_full += 1
        left -= count
        if remaining[s - 1] < 1.0:
            remaining = remaining / (1.0 - remaining[s - 1])
        w = size_weight[s - 1] / math.comb(d, s)
        if paired:
            w /= 2
        for combo in combinations(range(d), s):
            mk = np.zeros(d, dtype=bool)
            mk[list(combo)] = True
            masks.append(mk)
            weights.append(w)
            if paired:
                masks.append(~mk)
                weights.append(w)
    n_fixed = len(masks)

    if n_full < n_sizes and left > 0:
        rest = size_weight.copy()
        rest[:n_paired] /= 2  # a paired draw adds two coalitions
        rest = rest[n_full:] / rest[n_full:].sum()
        sampled = {}
        attempts = 0
        while left > 0 and attempts < 4 * budget:
            attempts += 1
            s = n_full + 1 + rng.choice(len(rest), p=rest)
            mk = np.zeros(d, dtype=bool)
            mk[rng.permutation(d)[:s]] = True
            for cand in ((mk, ~mk) if s <= n_paired else (mk,)):
                key = cand.tobytes()
                if key in sampled:
                    sampled[key][1] += 1.0
                elif left > 0:
                    sampled[key] = [cand, 1.0]
                    left -= 1
        if sampled:
            sw = np.array([w for _, w in sampled.values()])
            sw *= size_weight[n_full:].sum() / sw.sum()
            masks.extend(mk for mk, _ in sampled.values())
            weights.extend(sw)
    masks = np.array(masks, dtype=bool).reshape(-1, d)
    return masks, np.asarray(weights, dtype=float), n_fixed


def solve_kernel(masks, weights, v, v_empty, v_full):
    """Constrained WLS: minimise sum w (v(S) - v0 - z.phi)^2 s.t. sum phi = v_full - v0."""
    d = masks.shape[1]
    total = v_full - v_empty
    if d == 1:
        return np.array([total])
    Z = masks.astype(float)
    y = v - v_empty - Z[:, -1] * total
    A = Z[:, :-1] - Z[:, -1:]
    AtW = A.T * weights
    head = np.linalg.lstsq(AtW @ A, AtW @ y, rcond=None)[0]
    return np.append(head, total - head.sum())


def explain_kernel_shap(m, X_eval, background, cfg):
    t0 = time.perf_counter()
    X_eval = np.atleast_2d(np.asarray(X_eval, dtype=float))
    background = np.asarray(background, dtype=float)
    if len(background) == 0:
        raise ValueError("background must be non-empty")
    n, d = X_eval.shape
    budget = cfg.coalition_budget(d)
    if budget < d + 2:
        raise BudgetTooSmall(f"coalition budget {budget} < d + 2 = {d + 2}")
    enumerate_all = d <= cfg.shap_max_enumerate_dim
    v_empty = float(m.predict(background).mean())
    v_full = m.predict(X_eval)
    W = np.empty((n, d))
    if enumerate_all:
        masks, weights = full_design(d)
        nb = len(background)
        step = max(1, _ROWS_PER_CALL // (len(masks) * nb))
        for s in range(0, n, step):
            xs = X_eval[s : s + step]
            Z = np.where(masks[None, :, None, :], xs[:, None, None, :], background[None, None, :, :])
            v = m.predict(Z.reshape(-1, d)).reshape(len(xs), len(masks), nb).mean(axis=2)
            for i in range(len(xs)):
                W[s + i] = solve_kernel(masks, weights, v[i], v_empty, v_full[s + i])
    else:
        for i in range(n):
            masks, weights, _ = budget_design(d, budget, sample_rng(cfg.seed, i))
            v = coalition_values(m, X_eval[i], background, masks)
            W[i] = solve_kernel(masks, weights, v, v_empty, v_full[i])
    meta = {"base_value": v_empty, "enumerated": enumerate_all}
    return Explanation(W, "kernel_shap", time.perf_counter() - t0, meta)


def shap_background(train_features, size, seed):
    """First ``size`` rows of a seeded shuffle of the training features."""
    train_features = np.asarray(train_features, dtype=float)
    order = np.random.default_rng(seed).permutation(len(train_features))
    return train_features[order[:size]]
