"""Data-generating processes with exactly known input sensitivities.

Two generators are provided. ``gen_toy`` samples the two-feature quadratic
polynomial whose gradient is available in closed form. ``gen_process`` samples
an episodic nonlinear process: every run shares a latent initial state, each
sample integrates a random smooth vector field for a fixed number of explicit
Euler steps, and the input sensitivities are obtained by propagating the
tangent matrix alongside the state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateSplit, TrajectoryDiverged

log = logging.getLogger(__name__)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Features, targets and ground-truth gradients of a simulated process.

    ``feature_ranges`` default to the observed column ranges. Perturbed copies
    keep the ranges of the clean data they came from.
    """

    features: np.ndarray
    targets: np.ndarray
    true_gradients: np.ndarray
    run_ids: np.ndarray
    feature_ranges: np.ndarray = None
    dropped: int = 0

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        n, d = X.shape
        y = np.asarray(self.targets, dtype=float).reshape(-1)
        G = np.asarray(self.true_gradients, dtype=float)
        runs = np.asarray(self.run_ids).astype(np.int64).reshape(-1)
        if y.shape != (n,) or runs.shape != (n,):
            raise ValueError("targets and run_ids need one entry per sample")
        if G.shape != X.shape:
            raise ValueError(f"true_gradients shape {G.shape} != features shape {X.shape}")
        if not (np.isfinite(X).all() and np.isfinite(y).all() and np.isfinite(G).all()):
            raise ValueError("dataset contains non-finite entries")
        ranges = self.feature_ranges
        if ranges is None:
            ranges = X.max(axis=0) - X.min(axis=0) if n else np.zeros(d)
        ranges = np.asarray(ranges, dtype=float).reshape(-1)
        if ranges.shape != (d,) or (ranges < 0).any():
            raise ValueError("feature_ranges must be a non-negative d-vector")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "targets", _frozen(y))
        object.__setattr__(self, "true_gradients", _frozen(G))
        object.__setattr__(self, "run_ids", _frozen(runs, np.int64))
        object.__setattr__(self, "feature_ranges", _frozen(ranges))

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(
            self.features[idx],
            self.targets[idx],
            self.true_gradients[idx],
            self.run_ids[idx],
            feature_ranges=self.feature_ranges,
        )

    def replace(self, **changes):
        fields = dict(
            features=self.features,
            targets=self.targets,
            true_gradients=self.true_gradients,
            run_ids=self.run_ids,
            feature_ranges=self.feature_ranges,
            dropped=self.dropped,
        )
        fields.update(changes)
        return Dataset(**fields)


@dataclass(frozen=True)
class NoiseSpec:
    level: float
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.level < 1.0):
            raise ValueError(f"noise level must lie in [0, 1), got {self.level}")


# --------------------------------------------------------------------------
# toy polynomial


@dataclass(frozen=True)
class ToyCoefficients:
    k: tuple

    def __post_init__(self):
        k = tuple(float(v) for v in self.k)
        if len(k) != 6:
            raise ValueError("toy polynomial needs exactly six coefficients")
        object.__setattr__(self, "k", k)

    @classmethod
    def draw(cls, rng):
        return cls(tuple(rng.uniform(0.0, 1.0, size=6)))


class ToyProcess:
    """f(x1, x2) = k1 x1^2 + k2 x2^2 + k3 x1 x2 + k4 x1 + k5 x2 + k6."""

    low, high = -5.0, 5.0

    def __init__(self, coefficients):
        if not isinstance(coefficients, ToyCoefficients):
            coefficients = ToyCoefficients(coefficients)
        self.coefficients = coefficients

    def value(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        k1, k2, k3, k4, k5, k6 = self.coefficients.k
        x1, x2 = X[:, 0], X[:, 1]
        return k1 * x1**2 + k2 * x2**2 + k3 * x1 * x2 + k4 * x1 + k5 * x2 + k6

    def gradient(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        k1, k2, k3, k4, k5, _ = self.coefficients.k
        x1, x2 = X[:, 0], X[:, 1]
        return np.column_stack([2 * k1 * x1 + k3 * x2 + k4, 2 * k2 * x2 + k3 * x1 + k5])

    def dataset(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return Dataset(X, self.value(X), self.gradient(X), np.zeros(len(X), dtype=np.int64))


def toy_process(seed):
    """The toy process whose coefficients ``gen_toy(seed, n)`` uses."""
    return ToyProcess(ToyCoefficients.draw(np.random.default_rng(seed)))


def gen_toy(seed, n=5000):
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    process = ToyProcess(ToyCoefficients.draw(rng))
    X = rng.uniform(ToyProcess.low, ToyProcess.high, size=(n, 2))
    return process.dataset(X)


# --------------------------------------------------------------------------
# episodic process


@dataclass(frozen=True)
class EpisodicProcessSpec:
    """Shape of the episodic process.

    ``seed`` fixes the random vector field and readout; the seed passed to
    :func:`gen_process` fixes which runs are sampled from it.
    """

    input_dim: int = 6
    timesteps: int = 10
    runs: int = 1000
    step_size: float = 0.1
    seed: int = 0
    damping: float = 0.5
    state_bound: float = 1e6
    field: str = "random"

    def __post_init__(self):
        if self.input_dim < 2:
            raise ValueError("input_dim must be >= 2")
        if self.timesteps < 1:
            raise ValueError("timesteps must be >= 1")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        if self.field not in ("random", "identity"):
            raise ValueError(f"unknown vector field {self.field!r}")


class EpisodicProcess:
    """Random smooth dynamical system driven by the sample's inputs.

    Inputs live in process units ``x = center + half_width * z``. For a
    sample with normalized inputs ``z`` and run state ``s0``::

        s_{k+1} = s_k + h * (tanh(A s_k + B z + b) - damping * s_k)
        y       = c . tanh(s_T) + 0.25 * sum_j a_j z_j^2

    ``dy/dx`` is accumulated by evolving ``J_k = ds_k/dz`` with the same
    Euler scheme (``J_0 = 0`` since ``s0`` does not depend on the inputs).
    """

    def __init__(self, spec):
        self.spec = spec
        d = spec.input_dim
        rng = np.random.default_rng(spec.seed)
        self.center = 10.0 ** rng.uniform(0.0, 2.0, size=d)
        self.half_width = self.center * rng.uniform(0.2, 0.5, size=d)
        self.A = rng.normal(0.0, 0.8 / np.sqrt(d), size=(d, d))
        self.B = rng.normal(0.0, 1.5 / np.sqrt(d), size=(d, d))
        self.b = rng.normal(0.0, 0.1, size=d)
        self.c = rng.normal(0.0, 1.0, size=d)
        self.a = rng.uniform(-1.0, 1.0, size=d)

    def normalize(self, X):
        return (np.asarray(X, dtype=float) - self.center) / self.half_width

    def evaluate(self, X, s0):
        """Return ``(y, dy/dx, max |state|)`` for inputs ``X`` and initial states ``s0``."""
        spec = self.spec
        Z = np.atleast_2d(self.normalize(X))
        S = np.array(s0, dtype=float, copy=True)
        n, d = Z.shape
        J = np.zeros((n, d, d))
        peak = np.abs(S).max(axis=1)
        if spec.field == "random":
            drive = Z @ self.B.T + self.b
            h, lam = spec.step_size, spec.damping
            for _ in range(spec.timesteps):
                t = np.tanh(S @ self.A.T + drive)
                dt = 1.0 - t**2
                # tangent update uses the pre-step state
                dJ = dt[:, :, None] * (np.einsum("ij,njk->nik", self.A, J) + self.B) - lam * J
                S = S + h * (t - lam * S)
                J = J + h * dJ
                with np.errstate(invalid="ignore"):
                    peak = np.fmax(peak, np.abs(S).max(axis=1))
        ts = np.tanh(S)
        y = ts @ self.c + 0.25 * (Z**2) @ self.a
        dy_dz = np.einsum("nk,nkj->nj", self.c * (1.0 - ts**2), J) + 0.5 * self.a * Z
        return y, dy_dz / self.half_width, peak

    def sample_runs(self, runs, rng):
        """Draw ``runs`` episodes of ``timesteps`` samples each.

        Returns ``(X, s0, run_ids)``. Samples of one run share a setpoint and
        initial state; their inputs drift around the setpoint as an AR(1) walk.
        """
        d, T = self.spec.input_dim, self.spec.timesteps
        setpoint = rng.uniform(-1.0, 1.0, size=(runs, 1, d))
        init = rng.normal(0.0, 0.5, size=(runs, 1, d))
        eps = rng.normal(0.0, 0.15, size=(runs, T, d))
        drift = np.empty_like(eps)
        drift[:, 0] = eps[:, 0]
        for t in range(1, T):
            drift[:, t] = 0.8 * drift[:, t - 1] + eps[:, t]
        Z = (setpoint + drift).reshape(-1, d)
        s0 = np.broadcast_to(init, (runs, T, d)).reshape(-1, d).copy()
        run_ids = np.repeat(np.arange(runs, dtype=np.int64), T)
        return self.center + self.half_width * Z, s0, run_ids


def gen_process(spec, seed):
    """Sample a grouped dataset from the episodic process described by ``spec``.

    Rows whose trajectory leaves ``|s| <= spec.state_bound`` (or turns
    non-finite) are dropped; the count is logged and kept on ``Dataset.dropped``.
    """
    process = EpisodicProcess(spec)
    X, s0, run_ids = process.sample_runs(spec.runs, np.random.default_rng(seed))
    with np.errstate(over="ignore", invalid="ignore"):
        y, G, peak = process.evaluate(X, s0)
    ok = (
        (peak <= spec.state_bound)
        & np.isfinite(y)
        & np.isfinite(G).all(axis=1)
        & np.isfinite(X).all(axis=1)
    )
    dropped = int((~ok).sum())
    if not ok.any():
        raise TrajectoryDiverged(f"all {len(ok)} trajectories exceeded the state bound")
    if dropped:
        log.warning("dropped %d diverged rows out of %d", dropped, len(ok))
    return Dataset(X[ok], y[ok], G[ok], run_ids[ok], dropped=dropped)


# --------------------------------------------------------------------------
# perturbation and splitting


def perturb(ds, noise):
    """Add N(0, (level * range_j)^2) noise to every feature entry.

    Targets, gradients, run ids and the (clean) feature ranges are kept.
    """
    if not isinstance(noise, NoiseSpec):
        noise = NoiseSpec(*noise)
    if noise.level == 0.0:
        return ds.replace(features=ds.features.copy())
    rng = np.random.default_rng(noise.seed)
    eps = rng.standard_normal(ds.features.shape)
    return ds.replace(features=ds.features + eps * (noise.level * ds.feature_ranges))


def _round_half_up(v):
    return int(np.floor(v + 0.5))


def split_grouped(ds, eval_fraction=0.1, seed=0):
    """Split into ``(train, eval)`` without sharing runs between the two sides.

    When every sample carries the same run id the data is treated as iid and
    split sample-wise.
    """
    if not (0.0 < eval_fraction < 1.0):
        raise ValueError("eval_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    runs = np.unique(ds.run_ids)
    if len(runs) == 1:
        n_eval = _round_half_up(eval_fraction * ds.n)
        if n_eval < 1 or n_eval >= ds.n:
            raise DegenerateSplit(f"{ds.n} samples cannot give a {eval_fraction} eval fold")
        is_eval = np.zeros(ds.n, dtype=bool)
        is_eval[rng.permutation(ds.n)[:n_eval]] = True
    else:
        n_eval = _round_half_up(eval_fraction * len(runs))
        if n_eval < 1 or n_eval >= len(runs):
            raise DegenerateSplit(f"{len(runs)} runs cannot give a {eval_fraction} eval fold")
        eval_runs = rng.permutation(runs)[:n_eval]
        is_eval = np.isin(ds.run_ids, eval_runs)
    return ds.subset(np.flatnonzero(~is_eval)), ds.subset(np.flatnonzero(is_eval))


# --------------------------------------------------------------------------
# serialization


def write_csv(ds, path):
    d = ds.d
    header = ",".join(["run_id"] + [f"x_{j + 1}" for j in range(d)] + ["y"] + [f"g_{j + 1}" for j in range(d)])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for r, x, y, g in zip(ds.run_ids, ds.features, ds.targets, ds.true_gradients):
            fh.write(",".join([str(int(r))] + [repr(float(v)) for v in (*x, y, *g)]) + "\n")


def read_csv(path):
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    d = sum(1 for h in header if h.startswith("x_"))
    if header != ["run_id"] + [f"x_{j + 1}" for j in range(d)] + ["y"] + [f"g_{j + 1}" for j in range(d)]:
        raise ValueError(f"{path}: unexpected header {header}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Dataset(data[:, 1 : 1 + d], data[:, 1 + d], data[:, 2 + d :], data[:, 0].astype(np.int64))
