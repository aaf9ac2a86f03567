"""Ensemble of ReLU multilayer perceptrons trained with Adam.

All members share one architecture, so their parameters are stacked along a
leading member axis and trained in lock-step with batched matmuls. Every member
has its own initialization and its own mini-batch order.
"""

import numpy as np

from ..errors import NonFiniteLoss
from .base import TrainedModel

# rows per pass: small enough that every layer's activations stay in cache
_CHUNK = 2048


class MLPEnsemble(TrainedModel):
    kind = "mlp_ensemble"

    def __init__(self, weights, biases, x_mean, x_std, y_mean, y_std):
        self.weights = [np.asarray(W, dtype=float) for W in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        super().__init__(self.weights[0].shape[1])
        self.x_mean = np.asarray(x_mean, dtype=float)
        self.x_std = np.asarray(x_std, dtype=float)
        self.y_mean = float(y_mean)
        self.y_std = float(y_std)

    @property
    def members(self):
        return self.weights[0].shape[0]

    def _forward(self, Z):
        # Z: (n, d) standardized inputs -> list of pre-activations per layer
        H = np.broadcast_to(Z, (self.members,) + Z.shape)
        pre = []
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            A = H @ W + b
            pre.append(A)
            H = np.maximum(A, 0.0)
        out = (H @ self.weights[-1] + self.biases[-1])[..., 0]
        return out, pre

    def _outputs(self, Z):
        # prediction-only pass: no pre-activations kept, bias and ReLU in place
        H = np.broadcast_to(Z, (self.members,) + Z.shape)
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            H = H @ W
            H += b
            np.maximum(H, 0.0, out=H)
        return (H @ self.weights[-1])[..., 0] + self.biases[-1][..., 0]

    def member_predictions(self, X):
        X = self._check(X)
        outs = []
        for s in range(0, len(X), _CHUNK):
            outs.append(self._outputs((X[s : s + _CHUNK] - self.x_mean) / self.x_std))
        return np.concatenate(outs, axis=1) * self.y_std + self.y_mean

    def member_gradients(self, X):
        """Per-member input gradients, shape ``(members, n, d)``, original units."""
        X = self._check(X)
        grads = []
        for s in range(0, len(X), _CHUNK):
            _, pre = self._forward((X[s : s + _CHUNK] - self.x_mean) / self.x_std)
            # reverse sweep seeded with d(out)/d(last hidden) = output weights
            G = np.broadcast_to(self.weights[-1][:, None, :, 0], pre[-1].shape)
            for W, A in zip(reversed(self.weights[:-1]), reversed(pre)):
                G = (G * (A > 0)) @ np.swapaxes(W, 1, 2)
            grads.append(G)
        return np.concatenate(grads, axis=1) * (self.y_std / self.x_std)

    def _predict(self, X):
        return self.member_predictions(X).mean(axis=0)

    def _gradient(self, X):
        return self.member_gradients(X).mean(axis=0)

    def to_dict(self):
        return {
            "kind": self.kind,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }


def _canonical_order(X, y):
    keys = [y] + [X[:, j] for j in reversed(range(X.shape[1]))]
    return np.lexsort(keys)


def fit_mlp_ensemble(train, cfg, dtype=np.float32):
    """Train ``cfg.mlp.members`` networks on standardized inputs and targets.

    Rows are put in a canonical order first so the fit depends only on the
    multiset of training rows and ``cfg.seed``. Training runs in ``dtype``;
    the returned model evaluates in float64.
    """
    p = cfg.mlp
    X, y = train.features, train.targets
    n, d = X.shape
    if n < 32:
        raise ValueError(f"need at least 32 training rows, got {n}")
    order = _canonical_order(X, y)
    X, y = X[order], y[order]
    x_mean, x_std = X.mean(axis=0), X.std(axis=0)
    x_std = np.where(x_std > 0, x_std, 1.0)
    y_mean, y_std = y.mean(), y.std()
    y_std = y_std if y_std > 0 else 1.0
    Z = ((X - x_mean) / x_std).astype(dtype)
    t = ((y - y_mean) / y_std).astype(dtype)

    M = p.members
    seeds = np.random.SeedSequence(cfg.seed).spawn(M)
    rngs = [np.random.default_rng(s) for s in seeds]
    sizes = [d] + [p.width] * p.layers + [1]
    shapes = [(M, a, b) for a, b in zip(sizes[:-1], sizes[1:])] + [(M, 1, b) for b in sizes[1:]]
    # parameters, gradients and both Adam moments live in flat buffers so the
    # optimizer step is a handful of whole-vector operations
    flat = np.zeros(sum(int(np.prod(sh)) for sh in shapes), dtype=dtype)
    grad = np.zeros_like(flat)
    params, grads, at = [], [], 0
    for sh in shapes:
        size = int(np.prod(sh))
        params.append(flat[at : at + size].reshape(sh))
        grads.append(grad[at : at + size].reshape(sh))
        at += size
    L = len(sizes) - 1
    Ws, bs = params[:L], params[L:]
    gW, gb = grads[:L], grads[L:]
    for W, (fan_in, _) in zip(Ws, zip(sizes[:-1], sizes[1:])):
        W[...] = np.stack([r.normal(0.0, np.sqrt(2.0 / fan_in), size=W.shape[1:]) for r in rngs])
    m1 = np.zeros_like(flat)
    m2 = np.zeros_like(flat)
    beta1, beta2, eps, lr = 0.9, 0.999, 1e-8, p.learning_rate
    step = 0
    for _ in range(p.epochs):
        perms = np.stack([r.permutation(n) for r in rngs])
        epoch_loss = 0.0
        for s in range(0, n, p.batch_size):
            idx = perms[:, s : s + p.batch_size]
            B = idx.shape[1]
            H = Z[idx]
            acts, pres = [H], []
            for li in range(L - 1):
                A = H @ Ws[li] + bs[li]
                pres.append(A)
                H = np.maximum(A, 0)
                acts.append(H)
            out = H @ Ws[-1] + bs[-1]
            err = out[..., 0] - t[idx]
            epoch_loss += float((err**2).sum())
            G = (2.0 / B) * err[..., None]
            for li in reversed(range(L)):
                np.matmul(np.swapaxes(acts[li], 1, 2), G, out=gW[li])
                G.sum(axis=1, keepdims=True, out=gb[li])
                if li:
                    G = (G @ np.swapaxes(Ws[li], 1, 2)) * (pres[li - 1] > 0)
            step += 1
            c1 = 1.0 - beta1**step
            c2 = 1.0 - beta2**step
            m1 *= beta1
            m1 += (1 - beta1) * grad
            m2 *= beta2
            m2 += (1 - beta2) * grad * grad
            flat -= (lr / c1) * m1 / (np.sqrt(m2 / c2) + eps)
        if not np.isfinite(epoch_loss):
            raise NonFiniteLoss("MLP training loss became non-finite")
    return MLPEnsemble([W.copy() for W in Ws], [b.copy() for b in bs], x_mean, x_std, y_mean, y_std)
