import csv
import json
import time

import pytest

from xaibench import cli, harness
from xaibench.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, load_config, main
from xaibench.errors import ConfigInvalid, ResultsMalformed

# a small toy run: all three model kinds and all five explainers, sized for seconds
MINIMAL = {
    "dataset": {"kind": "toy", "n": 400},
    "noise_grid": [0.0],
    "repetitions": 1,
    "models": [
        "linear",
        {"kind": "mlp_ensemble", "mlp": {"members": 2, "epochs": 5}},
        {"kind": "gbdt", "gbdt": {"trees": 10}},
    ],
    "explainers": [
        "gradient",
        "smoothgrad_knn",
        "ale_knn",
        {"method": "lime", "lime_samples": 200},
        {"method": "kernel_shap", "shap_background_size": 10},
    ],
}


def _write(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


# -- configuration -------------------------------------------------------------------


@pytest.mark.parametrize(
    "doc,key",
    [
        ({"repetitons": 3}, "repetitons"),
        ({"noise_grid": [0.0, 1.5]}, "noise_grid[1]"),
        ({"models": [{"kind": "mlp_ensemble", "mlp": {"members": 0}}]}, "models[0].mlp.members"),
        ({"explainers": ["saliency"]}, "explainers[0]"),
        ({"dataset": {"kind": "toy", "n": "many"}}, "dataset.n"),
    ],
)
def test_invalid_config_names_the_key(tmp_path, capsys, doc, key):
    with pytest.raises(ConfigInvalid) as info:
        load_config(_write(tmp_path, doc))
    assert info.value.key == key
    assert main(["sweep", "--config", str(_write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert key in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "bad.json")


def test_precedence_flag_over_config_over_profile(tmp_path, monkeypatch):
    monkeypatch.delenv(cli.WORKERS_ENV, raising=False)
    assert load_config().plan.repetitions == 50
    assert load_config(overrides={"profile": "ci"}).plan.repetitions == 10
    path = _write(tmp_path, {"repetitions": 7, "profile": "ci"})
    assert load_config(path).plan.repetitions == 7
    assert load_config(path, {"repetitions": 3}).plan.repetitions == 3


def test_workers_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.WORKERS_ENV, "3")
    assert load_config().workers == 3
    assert load_config(_write(tmp_path, {"workers": 2})).workers == 2
    assert load_config(overrides={"workers": 5}).workers == 5
    monkeypatch.setenv(cli.WORKERS_ENV, "zero")
    with pytest.raises(ConfigInvalid):
        load_config()


def test_zero_workers_flag_is_config_error():
    assert main(["sweep", "--workers", "0"]) == EXIT_CONFIG


# -- sweep ------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def minimal_sweep(tmp_path_factory):
    root = tmp_path_factory.mktemp("sweep")
    cfg = _write(root, MINIMAL)
    assert main(["sweep", "--config", str(cfg), "--out", str(root / "a")]) == EXIT_OK
    return root, cfg


def test_minimal_sweep_has_fifteen_records(minimal_sweep):
    root, _ = minimal_sweep
    records = harness.read_results(root / "a" / "results.csv")
    assert len(records) == 15
    assert all(r.ok for r in records)
    assert {(r.model, r.explainer) for r in records} == {
        (m, e) for m in ("linear", "mlp_ensemble", "gbdt") for e in ("gradient", "smoothgrad_knn", "ale_knn", "lime", "kernel_shap")
    }
    with open(root / "a" / "aggregate.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 15
    plan = json.loads((root / "a" / "plan.json").read_text())
    assert plan["plan"]["repetitions"] == 1


def test_rerun_gives_identical_files(minimal_sweep):
    root, cfg = minimal_sweep
    assert main(["sweep", "--config", str(cfg), "--out", str(root / "b")]) == EXIT_OK
    for name in ("results.csv", "aggregate.csv", "plan.json"):
        assert (root / "a" / name).read_bytes() == (root / "b" / name).read_bytes()


def test_config_file_is_not_modified(minimal_sweep):
    root, cfg = minimal_sweep
    assert json.loads(cfg.read_text()) == MINIMAL


def test_strict_turns_tombstones_into_runtime_failure(tmp_path, monkeypatch):
    def boom(train, cfg):
        raise FloatingPointError("no")

    monkeypatch.setattr(harness.models, "fit", boom)
    doc = {**MINIMAL, "models": ["linear"], "explainers": ["gradient"]}
    cfg = _write(tmp_path, doc)
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "lenient")]) == EXIT_OK
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "strict"), "--strict"]) == EXIT_RUNTIME
    assert harness.read_results(tmp_path / "strict" / "results.csv")[0].status == "failed:FloatingPointError"


# -- sanity -----------------------------------------------------------------------------


@pytest.mark.parametrize("mode", ["eval-noise", "train-noise"])
def test_sanity_writes_three_by_five_table(tmp_path, mode, capsys):
    cfg = _write(tmp_path, {**MINIMAL, "repetitions": 2})
    assert main(["sanity", "--mode", mode, "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    stem = "sanity_" + mode.replace("-", "_")
    rows = (tmp_path / f"{stem}_table.csv").read_text(encoding="utf-8").splitlines()
    assert rows[0] == "model,gradient,smoothgrad_knn,ale_knn,lime,kernel_shap"
    assert [r.split(",")[0] for r in rows[1:]] == ["linear", "mlp_ensemble", "gbdt"]
    assert all(len(r.split(",")) == 6 and "±" in r for r in rows[1:])
    assert len(harness.read_results(tmp_path / f"{stem}_results.csv")) == 30
    assert len(capsys.readouterr().out.splitlines()) == 15


def test_sanity_smoke_profile_runtime(tmp_path):
    # default toy plan, five repetitions
    t0 = time.perf_counter()
    assert main(["sanity", "--mode", "train-noise", "--reps", "5", "--out", str(tmp_path)]) == EXIT_OK
    elapsed = time.perf_counter() - t0
    print(f"sanity --reps 5: {elapsed:.1f} s")
    assert elapsed < 60


# -- check -----------------------------------------------------------------------------------


def test_check_passes(capsys):
    assert main(["check"]) == EXIT_OK
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith(("PASS", "FAIL"))]
    assert len(lines) >= 8
    assert all(ln.startswith("PASS") for ln in lines)


def test_check_detects_corrupted_gradient(capsys):
    assert main(["check", "--inject-fault", "gradient"]) == EXIT_CHECK
    out = capsys.readouterr().out
    assert "FAIL  mlp_backprop_vs_fd" in out


# -- plot ------------------------------------------------------------------------------------


def _records():
    out = []
    for model in ("linear", "gbdt"):
        for explainer in ("gradient", "smoothgrad_knn", "ale_knn", "lime", "kernel_shap"):
            for level in (0.0, 0.5):
                for rep in range(3):
                    out.append(harness.ResultRecord("toy", model, explainer, level, rep, 0.5 + 0.1 * rep, 0.9 - level))
    return out


def test_plot_six_toy_panels(tmp_path):
    harness.write_results(_records(), tmp_path / "results.csv")
    assert main(["plot", str(tmp_path / "results.csv"), "--out", str(tmp_path / "p")]) == EXIT_OK
    files = sorted(p.name for p in (tmp_path / "p").iterdir())
    assert len(files) == 6
    assert "toy_r2.vl.json" in files
    spec = json.loads((tmp_path / "p" / "toy_lime.vl.json").read_text())
    for layer in spec["layer"]:
        assert layer["encoding"]["y"]["scale"] == {"domain": [0, 1]}
    values = spec["data"]["values"]
    assert {v["model"] for v in values} == {"linear", "gbdt"}
    assert [v["noise_level"] for v in values if v["model"] == "gbdt"] == [0.0, 0.5]


def test_plot_empty_results_writes_nothing(tmp_path):
    harness.write_results([], tmp_path / "results.csv")
    with pytest.raises(ResultsMalformed):
        cli.plot_specs(harness.read_results(tmp_path / "results.csv"))
    assert main(["plot", str(tmp_path / "results.csv"), "--out", str(tmp_path / "p")]) == EXIT_RUNTIME
    assert not (tmp_path / "p").exists()


def test_plot_missing_file_is_config_error(tmp_path):
    assert main(["plot", str(tmp_path / "none.csv")]) == EXIT_CONFIG


def test_plot_writes_nan_as_null(tmp_path):
    records = _records()
    records.append(harness.ResultRecord("toy", "mlp_ensemble", "gradient", 0.0, 0, float("nan"), float("nan"), status="failed:X"))
    specs = cli.plot_specs(records)
    values = specs["toy_gradient.vl.json"]["data"]["values"]
    assert {"model": "mlp_ensemble", "noise_level": 0.0, "mean": None, "p10": None, "p90": None} in values
