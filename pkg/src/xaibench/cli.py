"""Command-line front end: ``sweep``, ``sanity``, ``check`` and ``plot``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure, 3 failed
self-check.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import datagen, harness, scoring
from .datagen import EpisodicProcessSpec
from .errors import ConfigInvalid, ResultsMalformed
from .explainers import METHODS, ExplainerConfig
from .models import GBDTParams, MLPParams, ModelConfig
from .models.base import KINDS

log = logging.getLogger("xaibench")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3
PROFILE_REPS = {"full": 50, "ci": 10}
WORKERS_ENV = "XAIBENCH_WORKERS"
SANITY_MODES = {"eval-noise": "sanity_eval_noise", "train-noise": "sanity_train_noise"}

_INT = {"type": "integer"}
_POS = {"type": "integer", "minimum": 1}
_LEVEL = {"type": "number", "minimum": 0, "exclusiveMaximum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["toy", "episodic"]},
                "n": _POS,
                "episodic": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "input_dim": {"type": "integer", "minimum": 2},
                        "timesteps": _POS,
                        "runs": _POS,
                        "step_size": {"type": "number", "exclusiveMinimum": 0},
                        "seed": _INT,
                        "damping": {"type": "number", "minimum": 0},
                        "state_bound": {"type": "number", "exclusiveMinimum": 0},
                        "field": {"enum": ["random", "identity"]},
                    },
                },
            },
        },
        "noise_grid": {"type": "array", "items": _LEVEL, "minItems": 1},
        "repetitions": _POS,
        "eval_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "models": {
            "type": "array",
            "minItems": 1,
            "items": {
                "anyOf": [
                    {"enum": list(KINDS)},
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["kind"],
                        "properties": {
                            "kind": {"enum": list(KINDS)},
                            "seed": _INT,
                            "mlp": {
                                "type": "object",
                                "additionalProperties": False,
                                "properties": {
                                    "members": _POS,
                                    "layers": _POS,
                                    "width": _POS,
                                    "activation": {"enum": ["relu"]},
                                    "epochs": _POS,
                                    "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                                    "batch_size": _POS,
                                },
                            },
                            "gbdt": {
                                "type": "object",
                                "additionalProperties": False,
                                "properties": {
                                    "trees": _POS,
                                    "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                                    "max_leaves": {"type": "integer", "minimum": 2},
                                    "min_samples_leaf": _POS,
                                    "fd_step": {"type": "number", "exclusiveMinimum": 0},
                                },
                            },
                        },
                    },
                ]
            },
        },
        "explainers": {
            "type": "array",
            "minItems": 1,
            "items": {
                "anyOf": [
                    {"enum": list(METHODS)},
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["method"],
                        "properties": {
                            "method": {"enum": list(METHODS)},
                            "k": _POS,
                            "ale_bins": {"type": "integer", "minimum": 2},
                            "ale_sigma_sq": {"type": "number", "exclusiveMinimum": 0},
                            "lime_samples": _POS,
                            "lime_kernel_width_factor": {"type": "number", "exclusiveMinimum": 0},
                            "lime_ridge_penalty": {"type": "number", "minimum": 0},
                            "lime_discretize": {"type": "boolean"},
                            "shap_background_size": _POS,
                            "shap_coalition_budget": {"type": ["integer", "null"], "minimum": 1},
                            "shap_max_enumerate_dim": {"type": "integer", "minimum": 0},
                            "seed": _INT,
                        },
                    },
                ]
            },
        },
        "master_seed": _INT,
        "sanity_noise": _LEVEL,
        "output_dir": {"type": "string", "minLength": 1},
        "workers": _POS,
        "profile": {"enum": list(PROFILE_REPS)},
    },
}


@dataclass(frozen=True)
class RunConfig:
    plan: harness.ExperimentPlan
    output_dir: Path
    workers: int = 1
    profile: str = "full"


def _key(path):
    parts = []
    for p in path:
        if isinstance(p, int):
            parts[-1] = f"{parts[-1]}[{p}]" if parts else f"[{p}]"
        else:
            parts.append(str(p))
    return ".".join(parts) or "<root>"


def _validate(raw):
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(raw))
    if err is not None:
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            raise ConfigInvalid(_key(list(err.absolute_path) + extra[:1]), "unknown key")
        raise ConfigInvalid(_key(err.absolute_path), err.message)


def _build(cls, key, **kwargs):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(key, str(exc)) from None


def _model(item, key):
    if isinstance(item, str):
        return _build(ModelConfig, key, kind=item)
    item = dict(item)
    mlp = _build(MLPParams, f"{key}.mlp", **item.pop("mlp", {}))
    gbdt = _build(GBDTParams, f"{key}.gbdt", **item.pop("gbdt", {}))
    return _build(ModelConfig, key, mlp=mlp, gbdt=gbdt, **item)


def _explainer(item, key):
    if isinstance(item, str):
        return _build(ExplainerConfig, key, method=item)
    return _build(ExplainerConfig, key, **item)


def default_workers():
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigInvalid(WORKERS_ENV, f"not an integer: {raw!r}") from None
    if value < 1:
        raise ConfigInvalid(WORKERS_ENV, "must be >= 1")
    return value


def load_config(path=None, overrides=None, mode="sweep"):
    """Build a :class:`RunConfig` from an optional JSON file plus flag overrides.

    Precedence is flag, then config file, then profile / environment default.
    """
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigInvalid("config", f"cannot read {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigInvalid("config", f"invalid JSON: {exc}") from None
    raw = {**raw, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    _validate(raw)

    profile = raw.get("profile", "full")
    ds = dict(raw.get("dataset", {}))
    episodic = _build(EpisodicProcessSpec, "dataset.episodic", **ds.pop("episodic", {}))
    dataset = _build(harness.DatasetSpec, "dataset", episodic=episodic, **ds)
    plan_kwargs = {k: raw[k] for k in ("noise_grid", "eval_fraction", "master_seed", "sanity_noise") if k in raw}
    if "models" in raw:
        plan_kwargs["models"] = [_model(m, f"models[{i}]") for i, m in enumerate(raw["models"])]
    if "explainers" in raw:
        plan_kwargs["explainers"] = [_explainer(e, f"explainers[{i}]") for i, e in enumerate(raw["explainers"])]
    plan = _build(
        harness.ExperimentPlan,
        "plan",
        dataset=dataset,
        repetitions=raw.get("repetitions", PROFILE_REPS[profile]),
        mode=mode,
        **plan_kwargs,
    )
    workers = raw["workers"] if "workers" in raw else default_workers()
    out = Path(raw.get("output_dir", "results"))
    return RunConfig(plan=plan, output_dir=out, workers=workers, profile=profile)


def _prepare_output(out):
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigInvalid("output_dir", f"cannot create {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ConfigInvalid("output_dir", f"{out} is not writable")


def _write_plan(rc, path):
    doc = {"plan": harness.plan_to_dict(rc.plan), "profile": rc.profile}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _report_failures(records, strict):
    failed = [r for r in records if not r.ok]
    if failed:
        log.warning("%d of %d records failed", len(failed), len(records))
        for r in failed[:10]:
            log.warning("  %s/%s/%s l=%s rep=%s: %s", r.dataset, r.model, r.explainer, r.noise_level, r.repetition, r.status)
    return EXIT_RUNTIME if failed and strict else EXIT_OK


def cmd_sweep(args):
    rc = load_config(args.config, _overrides(args), mode="sweep")
    _prepare_output(rc.output_dir)
    records = harness.run_noise_sweep(rc.plan, rc.workers)
    harness.write_results(records, rc.output_dir / "results.csv")
    harness.write_rows(harness.aggregate(records), rc.output_dir / "aggregate.csv")
    _write_plan(rc, rc.output_dir / "plan.json")
    print(f"wrote {len(records)} records to {rc.output_dir}")
    return _report_failures(records, args.strict)


def cmd_sanity(args):
    mode = SANITY_MODES[args.mode]
    rc = load_config(args.config, _overrides(args), mode=mode)
    _prepare_output(rc.output_dir)
    run = harness.run_sanity_eval_noise if mode == "sanity_eval_noise" else harness.run_sanity_train_noise
    records, table = run(rc.plan, rc.workers)
    stem = f"sanity_{args.mode.replace('-', '_')}"
    harness.write_results(records, rc.output_dir / f"{stem}_results.csv")
    models = [m.name for m in rc.plan.models]
    methods = [e.name for e in rc.plan.explainers]
    if table:
        harness.write_rows(table, rc.output_dir / f"{stem}_long.csv")
    harness.write_sanity_table(table, rc.output_dir / f"{stem}_table.csv", models, methods)
    _write_plan(rc, rc.output_dir / f"{stem}_plan.json")
    for row in table:
        print(f"{row['model']:>14} {row['explainer']:>15}  {row['mean_s']:.3f} ± {row['std_s']:.3f}")
    return _report_failures(records, args.strict)


# --------------------------------------------------------------------------
# plot specs


def _panel(dataset, title, rows, y_field, band, score_panel):
    def num(v):
        return None if isinstance(v, float) and math.isnan(v) else v

    values = [
        {
            "model": r["model"],
            "noise_level": r["noise_level"],
            "mean": num(r[y_field]),
            "p10": num(r[band[0]]),
            "p90": num(r[band[1]]),
        }
        for r in rows
    ]
    y_scale = {"domain": [0, 1]} if score_panel else {"zero": False}
    y_title = "score s" if score_panel else "R²"
    return {
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "title": f"{dataset}: {title}",
        "data": {"values": values},
        "encoding": {
            "x": {"field": "noise_level", "type": "quantitative", "title": "noise level l"},
            "color": {"field": "model", "type": "nominal"},
        },
        "layer": [
            {
                "mark": {"type": "area", "opacity": 0.25},
                "encoding": {
                    "y": {"field": "p10", "type": "quantitative", "scale": y_scale, "title": y_title},
                    "y2": {"field": "p90"},
                },
            },
            {
                "mark": {"type": "line", "point": True},
                "encoding": {"y": {"field": "mean", "type": "quantitative", "scale": y_scale, "title": y_title}},
            },
        ],
    }


def plot_specs(records):
    """``{filename: vega-lite spec}``: one R² panel and one score panel per explainer, per dataset."""
    if not records:
        raise ResultsMalformed("results contain no records")
    rows = harness.aggregate(records)
    specs = {}
    for dataset in sorted({r["dataset"] for r in rows}):
        mine = [r for r in rows if r["dataset"] == dataset]
        # R² is per (model, level, rep) and identical across explainers; take one explainer's cells
        first = sorted({r["explainer"] for r in mine})[0]
        r2_rows = [r for r in mine if r["explainer"] == first]
        specs[f"{dataset}_r2.vl.json"] = _panel(dataset, "R²", r2_rows, "mean_r2", ("p10_r2", "p90_r2"), False)
        order = [m for m in METHODS if any(r["explainer"] == m for r in mine)]
        order += sorted({r["explainer"] for r in mine} - set(order))
        for method in order:
            sel = [r for r in mine if r["explainer"] == method]
            specs[f"{dataset}_{method}.vl.json"] = _panel(dataset, method, sel, "mean_s", ("p10_s", "p90_s"), True)
    return specs


def cmd_plot(args):
    path = Path(args.results)
    if not path.is_file():
        raise ConfigInvalid("results", f"{path} does not exist")
    specs = plot_specs(harness.read_results(path))
    out = Path(args.out) if args.out else path.parent / "plots"
    _prepare_output(out)
    for name, spec in specs.items():
        (out / name).write_text(json.dumps(spec, indent=2, allow_nan=False) + "\n")
    print(f"wrote {len(specs)} plot specs to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# self-check


def _rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def _check_suite(fault=None):
    """``[(name, ok, detail)]`` for every self-check invariant."""
    from . import explainers, models

    results = []

    def record(name, fn):
        try:
            ok, detail = fn()
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))

    toy = datagen.gen_toy(seed=7, n=600)
    proc = datagen.toy_process(seed=7)
    rng = np.random.default_rng(11)

    def score_oracle():
        s = scoring.score(toy.true_gradients, toy).s
        return abs(s - 1.0) <= 1e-12, f"s={s!r}"

    def score_flip():
        X = rng.uniform(0.5, 2.0, size=(50, 2))
        G = rng.normal(size=(50, 2))
        ds = datagen.Dataset(X, np.zeros(50), G, np.zeros(50, dtype=int))
        # swap the scaled magnitudes so every normalized row is reversed
        S = G * X
        flipped = S[:, ::-1] / X
        keep = np.abs(S[:, 0] - S[:, 1]) > 1e-9
        s = scoring.score(flipped[keep], ds.subset(np.flatnonzero(keep))).s
        return s == 0.0, f"s={s!r}"

    def affine():
        W = rng.normal(size=(200, 5))
        X = rng.uniform(0.1, 3.0, size=(200, 5))
        a = rng.uniform(0.1, 10.0, size=(200, 1))
        b = rng.normal(size=(200, 1))
        base = scoring.normalized(W, X)
        shifted = scoring.normalized((a * W * X + b) / X, X)
        err = float(np.abs(base - shifted).max())
        return err <= 1e-12, f"max diff {err:.2e}"

    def bounds():
        X = rng.normal(size=(100, 3))
        W = np.where(rng.random((100, 1)) < 0.3, 1.0, rng.normal(size=(100, 3)))
        ds = datagen.Dataset(X, np.zeros(100), rng.normal(size=(100, 3)), np.zeros(100, dtype=int))
        rep = scoring.score(W, ds)
        ok = 0.0 <= rep.s <= 1.0 and bool(((rep.per_sample >= 0) & (rep.per_sample <= 1)).all())
        return ok, f"s={rep.s:.4f}"

    def toy_gradient():
        X = rng.uniform(-5, 5, size=(50, 2))
        h = 1e-5
        fd = np.stack([(proc.value(X + h * e) - proc.value(X - h * e)) / (2 * h) for e in np.eye(2)], axis=1)
        err = _rel_err(proc.gradient(X), fd)
        return err <= 1e-6, f"rel err {err:.2e}"

    def mlp_gradient():
        cfg = ModelConfig("mlp_ensemble", mlp=MLPParams(members=2, epochs=5))
        m = models.fit(toy, cfg)
        X = rng.uniform(-5, 5, size=(100, 2))
        G = m.gradient(X)
        if fault == "gradient":
            G = G * 1.05 + 0.01
        h = 1e-6 * toy.feature_ranges
        fd = np.stack([(m.predict(X + h[j] * e) - m.predict(X - h[j] * e)) / (2 * h[j]) for j, e in enumerate(np.eye(2))], axis=1)
        err = np.abs(G - fd) / np.maximum(np.abs(fd), 1e-8)
        return float(np.median(err)) <= 1e-3 and (err <= 1e-3).mean() >= 0.95, f"median rel err {np.median(err):.2e}"

    def episodic_gradient():
        spec = EpisodicProcessSpec(input_dim=3, timesteps=5, runs=4, seed=3)
        p = datagen.EpisodicProcess(spec)
        X, s0, _ = p.sample_runs(4, np.random.default_rng(5))
        _, G, _ = p.evaluate(X, s0)
        h = 1e-6
        fd = np.stack([(p.evaluate(X + h * e, s0)[0] - p.evaluate(X - h * e, s0)[0]) / (2 * h) for e in np.eye(3)], axis=1)
        err = _rel_err(G, fd)
        return err <= 1e-4, f"rel err {err:.2e}"

    def shap_vs_exact():
        gb = models.fit(toy, ModelConfig("gbdt", gbdt=GBDTParams(trees=20)))
        bg = explainers.shap_background(toy.features, 20, 0)
        X = toy.features[:5]
        cfg = ExplainerConfig("kernel_shap", shap_max_enumerate_dim=0)
        W = explainers.explain_kernel_shap(gb, X, bg, cfg).weights
        exact = np.stack([explainers.exact_shapley(gb, x, bg) for x in X])
        err = float(np.abs(W - exact).max())
        return err <= 1e-3, f"max abs err {err:.2e}"

    def shap_efficiency():
        lin = models.fit(toy, ModelConfig("linear"))
        bg = explainers.shap_background(toy.features, 30, 0)
        exp = explainers.explain_kernel_shap(lin, toy.features[:20], bg, ExplainerConfig("kernel_shap"))
        gap = np.abs(exp.weights.sum(axis=1) + exp.meta["base_value"] - lin.predict(toy.features[:20])).max()
        return gap <= 1e-8, f"max gap {gap:.2e}"

    def smoothgrad_k1():
        lin = models.fit(toy, ModelConfig("linear"))
        X = toy.features[:30]
        a = explainers.explain_smoothgrad(lin, X, X, k=1).weights
        b = explainers.explain_gradient(lin, X).weights
        return np.array_equal(a, b), "bitwise equal" if np.array_equal(a, b) else "differs"

    def grouped_split():
        ds = datagen.gen_process(EpisodicProcessSpec(input_dim=2, timesteps=3, runs=40), seed=1)
        ok = True
        for seed in range(20):
            tr, ev = datagen.split_grouped(ds, 0.1, seed)
            ok &= not (set(tr.run_ids) & set(ev.run_ids))
        return ok, "20 splits disjoint" if ok else "overlap found"

    for name, fn in (
        ("score_oracle_is_one", score_oracle),
        ("score_flipped_rows_is_zero", score_flip),
        ("score_affine_invariance", affine),
        ("score_bounds_with_constant_rows", bounds),
        ("toy_gradient_vs_fd", toy_gradient),
        ("mlp_backprop_vs_fd", mlp_gradient),
        ("episodic_sensitivity_vs_fd", episodic_gradient),
        ("kernel_shap_vs_enumeration", shap_vs_exact),
        ("kernel_shap_efficiency", shap_efficiency),
        ("smoothgrad_k1_equals_gradient", smoothgrad_k1),
        ("grouped_split_disjoint", grouped_split),
    ):
        record(name, fn)
    return results


def cmd_check(args):
    results = _check_suite(args.inject_fault)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<34} {detail}")
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_CHECK if failed else EXIT_OK


# --------------------------------------------------------------------------


def _overrides(args):
    return {
        "repetitions": args.reps,
        "workers": args.workers,
        "output_dir": args.out,
        "profile": args.profile,
        "master_seed": args.seed,
    }


def _run_args(p):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    p.add_argument("--reps", type=int, help="repetitions (overrides the profile)")
    p.add_argument("--profile", choices=sorted(PROFILE_REPS), help="full = 50 reps, ci = 10 reps")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--strict", action="store_true", help="exit nonzero when any cell failed")


def build_parser():
    parser = argparse.ArgumentParser(prog="xaibench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="noise sweep over models and explainers")
    _run_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sanity", help="random-baseline sanity check")
    p.add_argument("--mode", required=True, choices=sorted(SANITY_MODES))
    _run_args(p)
    p.set_defaults(func=cmd_sanity)

    p = sub.add_parser("check", help="run the built-in oracle self-checks")
    p.add_argument("--inject-fault", choices=["gradient"], help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("plot", help="emit Vega-Lite specs from a results CSV")
    p.add_argument("results")
    p.add_argument("--out", help="directory for the specs (default: <results dir>/plots)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("error: workers: must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
