"""Noise sweeps and random-baseline checks over (model, explainer) cells.

A *group* is one (model, noise level, repetition) triple: the data is split,
the training side is perturbed and the model is fit once, then every
explainer of the plan is run and scored. Each stage draws from its own seed,
derived from the master seed and only the coordinates that stage depends on,
so results do not depend on scheduling or worker count:

* split and training noise: ``(master, repetition)``, shared by every model
  and noise level (noise levels scale the same standard-normal draws);
* model fit: ``(master, model, repetition)``;
* explainer: ``(master, model, explainer, noise level, repetition)``.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import datagen, models, scoring
from .datagen import EpisodicProcessSpec, NoiseSpec
from .errors import ResultsMalformed
from .explainers import METHODS, ExplainerConfig, explain
from .models import ModelConfig

log = logging.getLogger(__name__)

MODES = ("sweep", "sanity_eval_noise", "sanity_train_noise")
DEFAULT_NOISE_GRID = (0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5)
RESULT_COLUMNS = ("dataset", "model", "explainer", "noise_level", "repetition", "s", "r2", "status")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "toy"
    n: int = 5000
    episodic: EpisodicProcessSpec = field(default_factory=EpisodicProcessSpec)

    def __post_init__(self):
        if self.kind not in ("toy", "episodic"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")

    @property
    def name(self):
        return self.kind


def default_models():
    return tuple(ModelConfig(kind) for kind in ("linear", "mlp_ensemble", "gbdt"))


def default_explainers():
    return tuple(ExplainerConfig(method) for method in METHODS)


@dataclass(frozen=True)
class ExperimentPlan:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    noise_grid: tuple = DEFAULT_NOISE_GRID
    repetitions: int = 50
    eval_fraction: float = 0.1
    models: tuple = field(default_factory=default_models)
    explainers: tuple = field(default_factory=default_explainers)
    master_seed: int = 0
    mode: str = "sweep"
    sanity_noise: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "noise_grid", tuple(float(v) for v in self.noise_grid))
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "explainers", tuple(self.explainers))
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.noise_grid or any(not (0.0 <= v < 1.0) for v in self.noise_grid):
            raise ValueError("noise levels must lie in [0, 1)")
        if not (0.0 <= self.sanity_noise < 1.0):
            raise ValueError("sanity_noise must lie in [0, 1)")
        for label, items in (("models", self.models), ("explainers", self.explainers)):
            names = [c.name for c in items]
            if not names or len(set(names)) != len(names):
                raise ValueError(f"{label} must be non-empty with unique names")


@dataclass
class ResultRecord:
    dataset: str
    model: str
    explainer: str
    noise_level: float
    repetition: int
    s: float
    r2: float
    wall_time: float = 0.0
    status: str = "ok"

    @property
    def ok(self):
        return self.status == "ok"

    def sort_key(self):
        return (self.dataset, self.model, self.explainer, self.noise_level, self.repetition)


def _coord_int(c):
    if isinstance(c, (int, np.integer)) and not isinstance(c, bool):
        return int(c) & (2**63 - 1)
    text = repr(float(c)) if isinstance(c, float) else str(c)
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little") >> 1


def derive_seed(master, *coords):
    """Stable 63-bit seed for a tuple of coordinates."""
    ss = np.random.SeedSequence([_coord_int(master)] + [_coord_int(c) for c in coords])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@lru_cache(maxsize=8)
def build_dataset(spec, master_seed):
    """Return ``(dataset, process)`` for a plan's dataset spec."""
    seed = derive_seed(master_seed, "dataset", spec.kind)
    if spec.kind == "toy":
        return datagen.gen_toy(seed, spec.n), datagen.toy_process(seed)
    return datagen.gen_process(spec.episodic, seed), None


def _gaussian_like(ref, shape, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(ref.mean(axis=0), ref.std(axis=0), size=shape)


def prepare_group(plan, noise_level, repetition):
    """Split / perturb / replace data for one group; returns ``(train, eval)``."""
    ds, process = build_dataset(plan.dataset, plan.master_seed)
    train, ev = datagen.split_grouped(ds, plan.eval_fraction, derive_seed(plan.master_seed, "split", repetition))
    noise_seed = derive_seed(plan.master_seed, "noise", repetition)
    draw_seed = derive_seed(plan.master_seed, "draw", repetition)
    if plan.mode == "sweep":
        train = datagen.perturb(train, NoiseSpec(noise_level, noise_seed))
    elif plan.mode == "sanity_eval_noise":
        if process is None:
            raise ValueError("evaluation-noise sanity check needs a dataset with an analytic gradient")
        train = datagen.perturb(train, NoiseSpec(plan.sanity_noise, noise_seed))
        Xr = _gaussian_like(train.features, ev.features.shape, draw_seed)
        ev = process.dataset(Xr).replace(feature_ranges=ds.feature_ranges)
    else:
        train = train.replace(features=_gaussian_like(train.features, train.features.shape, draw_seed))
    return train, ev


def group_noise_level(plan, noise_level):
    if plan.mode == "sanity_eval_noise":
        return plan.sanity_noise
    if plan.mode == "sanity_train_noise":
        return 0.0
    return noise_level


def run_group(plan, model_cfg, noise_level, repetition, explainers=None):
    """Fit one model and score every explainer on it."""
    explainers = plan.explainers if explainers is None else explainers
    noise_level = group_noise_level(plan, noise_level)
    name = plan.dataset.name
    ds, _ = build_dataset(plan.dataset, plan.master_seed)

    def tombstones(exc, r2=math.nan):
        status = f"failed:{type(exc).__name__}"
        log.warning("%s/%s l=%s rep=%s: %s", name, model_cfg.name, noise_level, repetition, exc)
        return [
            ResultRecord(name, model_cfg.name, e.name, noise_level, repetition, math.nan, r2, 0.0, status)
            for e in explainers
        ]

    t0 = time.perf_counter()
    try:
        train, ev = prepare_group(plan, noise_level, repetition)
        cfg = replace(model_cfg, seed=derive_seed(plan.master_seed, "model", model_cfg.name, repetition, model_cfg.seed))
        model = models.fit(train, cfg)
        r2 = scoring.r2(ev.targets, model.predict(ev.features))
    except Exception as exc:  # a failed fit must not abort the sweep
        return tombstones(exc)
    fit_time = time.perf_counter() - t0

    records = []
    for ecfg in explainers:
        seed = derive_seed(plan.master_seed, "explain", model_cfg.name, ecfg.name, noise_level, repetition, ecfg.seed)
        try:
            exp = explain(
                replace(ecfg, seed=seed),
                model,
                ev.features,
                pool=ev.features,
                train_features=train.features,
                feature_ranges=ds.feature_ranges,
            )
            s = scoring.score(exp, ev).s
        except Exception as exc:
            log.warning("%s/%s/%s failed: %s", name, model_cfg.name, ecfg.name, exc)
            status = f"failed:{type(exc).__name__}"
            records.append(ResultRecord(name, model_cfg.name, ecfg.name, noise_level, repetition, math.nan, r2, 0.0, status))
            continue
        records.append(
            ResultRecord(name, model_cfg.name, ecfg.name, noise_level, repetition, s, r2, fit_time + exp.wall_time)
        )
    return records


def run_cell(plan, model_cfg, explainer_cfg, noise_level, repetition):
    return run_group(plan, model_cfg, noise_level, repetition, (explainer_cfg,))[0]


def _group_job(args):
    plan, model_cfg, level, rep = args
    return run_group(plan, model_cfg, level, rep)


def run_plan(plan, workers=1):
    """Every group of ``plan`` (respecting its mode), sorted canonically."""
    levels = plan.noise_grid if plan.mode == "sweep" else (plan.sanity_noise,)
    jobs = [(plan, m, level, rep) for m in plan.models for level in levels for rep in range(plan.repetitions)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_group_job, jobs))
    else:
        chunks = [_group_job(job) for job in jobs]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=ResultRecord.sort_key)
    return records


def run_noise_sweep(plan, workers=1):
    return run_plan(replace(plan, mode="sweep"), workers)


def run_sanity_eval_noise(plan, workers=1):
    records = run_plan(replace(plan, mode="sanity_eval_noise"), workers)
    return records, sanity_table(records)


def run_sanity_train_noise(plan, workers=1):
    records = run_plan(replace(plan, mode="sanity_train_noise"), workers)
    return records, sanity_table(records)


# --------------------------------------------------------------------------
# aggregation and output


def _percentiles(v):
    if len(v) == 0:
        return math.nan, math.nan, math.nan
    return float(np.mean(v)), float(np.percentile(v, 10)), float(np.percentile(v, 90))


def aggregate(records):
    """Mean and 10th/90th percentiles of ``s`` and ``r2`` per cell."""
    cells = {}
    for r in records:
        cells.setdefault((r.dataset, r.model, r.explainer, r.noise_level), []).append(r)
    rows = []
    for key in sorted(cells):
        group = cells[key]
        good = [r for r in group if r.ok]
        s = np.array([r.s for r in good])
        r2 = np.array([r.r2 for r in good])
        mean_s, p10_s, p90_s = _percentiles(s)
        mean_r2, p10_r2, p90_r2 = _percentiles(r2)
        rows.append(
            dict(
                zip(("dataset", "model", "explainer", "noise_level"), key),
                n=len(good),
                failed=len(group) - len(good),
                mean_s=mean_s,
                std_s=float(s.std(ddof=1)) if len(s) > 1 else 0.0,
                p10_s=p10_s,
                p90_s=p90_s,
                mean_r2=mean_r2,
                p10_r2=p10_r2,
                p90_r2=p90_r2,
            )
        )
    return rows


def sanity_table(records):
    """Mean and standard deviation of ``s`` per (model, explainer)."""
    cells = {}
    for r in records:
        if r.ok:
            cells.setdefault((r.model, r.explainer), []).append(r.s)
    rows = []
    for (model, explainer), s in sorted(cells.items()):
        s = np.asarray(s)
        std = float(s.std(ddof=1)) if len(s) > 1 else 0.0
        rows.append({"model": model, "explainer": explainer, "n": len(s), "mean_s": float(s.mean()), "std_s": std})
    return rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in sorted(records, key=ResultRecord.sort_key):
            w.writerow([_fmt(v) for v in (r.dataset, r.model, r.explainer, float(r.noise_level), r.repetition, float(r.s), float(r.r2), r.status)])


def read_results(path):
    """Parse a results CSV written by :func:`write_results`."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != RESULT_COLUMNS:
            raise ResultsMalformed(f"{path}: expected columns {','.join(RESULT_COLUMNS)}")
        for line, row in enumerate(reader, start=2):
            try:
                records.append(
                    ResultRecord(
                        row["dataset"],
                        row["model"],
                        row["explainer"],
                        float(row["noise_level"]),
                        int(row["repetition"]),
                        float(row["s"]),
                        float(row["r2"]),
                        status=row["status"],
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ResultsMalformed(f"{path}:{line}: {exc}") from None
    return records


def write_rows(rows, path):
    if not rows:
        raise ValueError("nothing to write")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(rows[0]))
        for row in rows:
            w.writerow([_fmt(v) for v in row.values()])


def write_sanity_table(rows, path, models=None, methods=METHODS):
    """Model x explainer grid of ``mean±std`` strings."""
    lookup = {(r["model"], r["explainer"]): r for r in rows}
    models = models or sorted({r["model"] for r in rows})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", *methods])
        for m in models:
            cells = []
            for e in methods:
                r = lookup.get((m, e))
                cells.append("" if r is None else f"{r['mean_s']:.2f}±{r['std_s']:.2f}")
            w.writerow([m, *cells])


def plan_to_dict(plan):
    return asdict(plan)
