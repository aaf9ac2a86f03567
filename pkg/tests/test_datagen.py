import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xaibench import datagen
from xaibench.datagen import Dataset, EpisodicProcess, EpisodicProcessSpec, NoiseSpec, ToyProcess
from xaibench.errors import DegenerateSplit, TrajectoryDiverged


# -- toy polynomial ----------------------------------------------------------


def test_toy_unit_coefficients_hand_expansion():
    p = ToyProcess((1, 1, 1, 1, 1, 1))
    # 1 + 4 + 2 + 1 + 2 + 1
    assert p.value([[1.0, 2.0]])[0] == 11.0
    np.testing.assert_array_equal(p.gradient([[1.0, 2.0]])[0], [5.0, 6.0])


def test_toy_constant_function():
    p = ToyProcess((0, 0, 0, 0, 0, 2.5))
    X = np.random.default_rng(0).uniform(-5, 5, size=(20, 2))
    np.testing.assert_array_equal(p.value(X), 2.5)
    np.testing.assert_array_equal(p.gradient(X), 0.0)


def test_gen_toy_shape_bounds_and_runs():
    ds = datagen.gen_toy(seed=1, n=5000)
    assert ds.features.shape == (5000, 2)
    assert ds.features.min() >= -5.0 and ds.features.max() <= 5.0
    assert (ds.run_ids == 0).all()
    k = np.array(datagen.toy_process(1).coefficients.k)
    assert ((k >= 0) & (k <= 1)).all()


def test_gen_toy_gradients_match_closed_form():
    ds = datagen.gen_toy(seed=2, n=300)
    k1, k2, k3, k4, k5, _ = datagen.toy_process(2).coefficients.k
    x1, x2 = ds.features.T
    expected = np.column_stack([2 * k1 * x1 + k3 * x2 + k4, 2 * k2 * x2 + k3 * x1 + k5])
    np.testing.assert_array_equal(ds.true_gradients, expected)


def test_gen_toy_seeded_and_rejects_empty():
    a, b = datagen.gen_toy(5, 50), datagen.gen_toy(5, 50)
    np.testing.assert_array_equal(a.features, b.features)
    with pytest.raises(ValueError):
        datagen.gen_toy(5, 0)


# -- Dataset -------------------------------------------------------------------


def test_dataset_rejects_non_finite():
    X = np.array([[0.0, np.nan]])
    with pytest.raises(ValueError):
        Dataset(X, [0.0], [[0.0, 0.0]], [0])


def test_dataset_shape_checks_and_ranges():
    X = np.array([[0.0, 1.0], [2.0, -1.0], [1.0, 0.0]])
    ds = Dataset(X, np.zeros(3), np.zeros((3, 2)), np.zeros(3))
    np.testing.assert_array_equal(ds.feature_ranges, [2.0, 2.0])
    with pytest.raises(ValueError):
        Dataset(X, np.zeros(3), np.zeros((3, 3)), np.zeros(3))
    with pytest.raises(ValueError):
        ds.features[0, 0] = 5.0


# -- episodic process ----------------------------------------------------------


def test_identity_field_single_step_is_readout_gradient():
    spec = EpisodicProcessSpec(input_dim=3, timesteps=1, runs=5, field="identity", seed=4)
    p = EpisodicProcess(spec)
    X, s0, _ = p.sample_runs(5, np.random.default_rng(0))
    _, G, _ = p.evaluate(X, s0)
    # with no dynamics the state never sees the inputs: only the quadratic readout term remains
    Z = p.normalize(X)
    np.testing.assert_allclose(G, 0.5 * p.a * Z / p.half_width, rtol=0, atol=1e-15)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_episodic_sensitivities_match_finite_differences(seed):
    spec = EpisodicProcessSpec(input_dim=4, timesteps=10, runs=30, seed=seed)
    p = EpisodicProcess(spec)
    X, s0, _ = p.sample_runs(30, np.random.default_rng(seed + 10))
    X, s0 = X[:120], s0[:120]
    _, G, _ = p.evaluate(X, s0)
    ds = datagen.gen_process(spec, seed + 10)
    h = 1e-5 * ds.feature_ranges
    fd = np.empty_like(G)
    for j in range(spec.input_dim):
        e = np.zeros(spec.input_dim)
        e[j] = h[j]
        fd[:, j] = (p.evaluate(X + e, s0)[0] - p.evaluate(X - e, s0)[0]) / (2 * h[j])
    rel = np.linalg.norm(G - fd, axis=1) / np.linalg.norm(fd, axis=1)
    assert rel.max() <= 1e-4


def test_gen_process_run_structure():
    ds = datagen.gen_process(EpisodicProcessSpec(runs=100, timesteps=10), seed=0)
    ids, counts = np.unique(ds.run_ids, return_counts=True)
    assert ds.dropped == 0
    assert len(ids) == 100 and (counts == 10).all()


def test_gen_process_drops_diverged_rows(caplog):
    spec = EpisodicProcessSpec(input_dim=2, timesteps=5, runs=50, state_bound=0.9)
    with caplog.at_level(logging.WARNING):
        ds = datagen.gen_process(spec, seed=0)
    assert ds.dropped > 0
    assert ds.n + ds.dropped == 250
    assert "dropped" in caplog.text


def test_gen_process_all_diverged():
    spec = EpisodicProcessSpec(input_dim=2, timesteps=5, runs=5, state_bound=1e-9)
    with pytest.raises(TrajectoryDiverged):
        datagen.gen_process(spec, seed=0)


def test_episodic_spec_validation():
    with pytest.raises(ValueError):
        EpisodicProcessSpec(input_dim=1)
    with pytest.raises(ValueError):
        EpisodicProcessSpec(step_size=0.0)


# -- perturbation ----------------------------------------------------------------


def test_perturb_zero_level_is_bit_identical(toy):
    out = datagen.perturb(toy, NoiseSpec(0.0, 9))
    np.testing.assert_array_equal(out.features, toy.features)


def test_perturb_changes_only_features(toy):
    out = datagen.perturb(toy, NoiseSpec(0.2, 1))
    assert not np.array_equal(out.features, toy.features)
    np.testing.assert_array_equal(out.targets, toy.targets)
    np.testing.assert_array_equal(out.true_gradients, toy.true_gradients)
    np.testing.assert_array_equal(out.run_ids, toy.run_ids)
    np.testing.assert_array_equal(out.feature_ranges, toy.feature_ranges)


def test_perturb_same_seed_identical(toy):
    a = datagen.perturb(toy, NoiseSpec(0.3, 42))
    b = datagen.perturb(toy, NoiseSpec(0.3, 42))
    np.testing.assert_array_equal(a.features, b.features)


def test_perturb_standard_deviation_is_level_times_range():
    n = 100_000
    X = np.column_stack([np.linspace(0.0, 10.0, n), np.linspace(-1.0, 1.0, n)])
    ds = Dataset(X, np.zeros(n), np.zeros((n, 2)), np.zeros(n))
    out = datagen.perturb(ds, NoiseSpec(0.1, 3))
    std = (out.features - X).std(axis=0)
    # range 10 at level 0.1 gives unit noise
    np.testing.assert_allclose(std, [1.0, 0.2], rtol=0.05)


@pytest.mark.parametrize("level", [-0.1, 1.0])
def test_noise_level_bounds(level):
    with pytest.raises(ValueError):
        NoiseSpec(level, 0)


# -- splitting -------------------------------------------------------------------


def _grouped(runs, per_run=3):
    n = runs * per_run
    X = np.arange(2 * n, dtype=float).reshape(n, 2)
    return Dataset(X, np.arange(n, dtype=float), np.zeros((n, 2)), np.repeat(np.arange(runs), per_run))


def test_ten_runs_give_one_eval_run():
    train, ev = datagen.split_grouped(_grouped(10), 0.1, seed=0)
    assert len(np.unique(ev.run_ids)) == 1
    assert len(np.unique(train.run_ids)) == 9


def test_iid_split_size():
    ds = Dataset(np.zeros((100, 2)), np.arange(100.0), np.zeros((100, 2)), np.zeros(100))
    train, ev = datagen.split_grouped(ds, 0.1, seed=0)
    assert ev.n == 10 and train.n == 90


def test_degenerate_split():
    with pytest.raises(DegenerateSplit):
        datagen.split_grouped(_grouped(3), 0.1, seed=0)
    with pytest.raises(ValueError):
        datagen.split_grouped(_grouped(10), 1.0, seed=0)


@given(runs=st.integers(2, 60), per_run=st.integers(1, 4), frac=st.floats(0.05, 0.6), seed=st.integers(0, 2**32))
def test_grouped_split_partitions(runs, per_run, frac, seed):
    ds = _grouped(runs, per_run)
    try:
        train, ev = datagen.split_grouped(ds, frac, seed)
    except DegenerateSplit:
        return
    assert not set(train.run_ids) & set(ev.run_ids)
    assert sorted(np.concatenate([train.targets, ev.targets])) == sorted(ds.targets)
    assert len(np.unique(ev.run_ids)) == int(np.floor(frac * runs + 0.5))


# -- serialization ---------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    ds = datagen.gen_process(EpisodicProcessSpec(input_dim=3, runs=4, timesteps=2), seed=0)
    path = tmp_path / "ds.csv"
    datagen.write_csv(ds, path)
    assert path.read_text().splitlines()[0] == "run_id,x_1,x_2,x_3,y,g_1,g_2,g_3"
    back = datagen.read_csv(path)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.true_gradients, ds.true_gradients)
    np.testing.assert_array_equal(back.run_ids, ds.run_ids)
