import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from xaibench.datagen import Dataset
from xaibench.errors import DimensionMismatch, ZeroVariance
from xaibench.models import FunctionModel, LinearModel
from xaibench.scoring import ScoreReport, brier_rows, infidelity, minmax_rows, normalized, r2, scale_by_input, score


def _eval_set(X, G):
    X = np.asarray(X, dtype=float)
    return Dataset(X, np.zeros(len(X)), G, np.zeros(len(X)))


# -- pipeline stages ---------------------------------------------------------------


def test_scale_by_input():
    np.testing.assert_array_equal(scale_by_input([[1.0, 2.0]], [[3.0, -1.0]]), [[3.0, -2.0]])
    np.testing.assert_array_equal(scale_by_input([[7.0, -4.0]], [[0.0, 0.0]]), [[0.0, 0.0]])
    with pytest.raises(DimensionMismatch):
        scale_by_input(np.ones((2, 2)), np.ones((2, 3)))


def test_minmax_rows():
    np.testing.assert_array_equal(minmax_rows([[2.0, 4.0, 6.0]]), [[0.0, 0.5, 1.0]])
    np.testing.assert_array_equal(minmax_rows([[5.0, 5.0, 5.0]]), [[0.5, 0.5, 0.5]])
    np.testing.assert_array_equal(minmax_rows([[1.0, 1.0 + 1e-13]]), [[0.5, 0.5]])


@pytest.mark.parametrize("a,b", [(1.0, 0.0), (3.0, -7.0), (0.25, 100.0)])
def test_minmax_positive_affine(a, b):
    np.testing.assert_allclose(minmax_rows([a * np.array([2.0, 4.0, 6.0]) + b]), [[0.0, 0.5, 1.0]], atol=1e-15)


def test_brier_rows():
    assert brier_rows([[0.2, 0.7]], [[0.2, 0.7]])[0] == 0.0
    assert brier_rows([[0.0, 1.0]], [[1.0, 0.0]])[0] == 1.0
    assert brier_rows([[0.0, 0.5, 1.0]], [[0.0, 0.0, 1.0]])[0] == pytest.approx(1 / 12, rel=1e-15)
    with pytest.raises(DimensionMismatch):
        brier_rows(np.zeros((1, 2)), np.zeros((1, 3)))


@given(arrays(float, (4, 3), elements=st.floats(0, 1)), arrays(float, (4, 3), elements=st.floats(0, 1)))
def test_brier_symmetric(A, B):
    np.testing.assert_array_equal(brier_rows(A, B), brier_rows(B, A))


# -- score -------------------------------------------------------------------------


def test_score_of_truth_is_one(toy):
    rep = score(toy.true_gradients, toy)
    assert rep.s == 1.0
    assert rep.n == toy.n
    np.testing.assert_array_equal(rep.per_sample, 0.0)


def test_score_of_flipped_rows_is_zero():
    ds = _eval_set(np.ones((5, 2)), np.tile([1.0, 0.0], (5, 1)))
    assert score(np.tile([0.0, 1.0], (5, 1)), ds).s == 0.0


def test_score_accepts_explanations_and_checks_shape(toy):
    from xaibench.explainers import Explanation

    assert score(Explanation(toy.true_gradients, "gradient"), toy).s == 1.0
    with pytest.raises(DimensionMismatch):
        score(np.zeros((3, 2)), toy)


def test_score_report_bounds():
    with pytest.raises(ValueError):
        ScoreReport(s=1.5, per_sample=np.zeros(1))


matrices = arrays(float, st.tuples(st.integers(1, 8), st.integers(2, 5)), elements=st.floats(-1e3, 1e3))


@given(W=matrices, seed=st.integers(0, 2**32 - 1), constant_rows=st.booleans())
def test_score_bounds_fuzz(W, seed, constant_rows):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-5, 5, size=W.shape)
    if constant_rows:
        X[0] = 0.0
    ds = _eval_set(X, rng.normal(size=W.shape))
    rep = score(W, ds)
    assert 0.0 <= rep.s <= 1.0
    assert ((rep.per_sample >= 0) & (rep.per_sample <= 1)).all()
    assert rep.s == pytest.approx(1.0 - rep.per_sample.mean(), abs=1e-15)


@given(
    W=matrices,
    a=st.floats(0.01, 100.0),
    b=st.floats(-100.0, 100.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_score_positive_affine_invariance(W, a, b, seed):
    rng = np.random.default_rng(seed)
    X = np.ones_like(W)
    span = W.max(axis=1) - W.min(axis=1)
    # rows too close to the degenerate threshold would flip between the two regimes under rounding
    assume(((span == 0) | (span > 1e-6 * (1 + np.abs(W).max()))).all())
    ds = _eval_set(X, rng.normal(size=W.shape))
    # with unit inputs the scaled attributions are W itself
    assert score(a * W + b, ds).s == pytest.approx(score(W, ds).s, abs=1e-12)


def test_both_sides_share_the_normalization(toy):
    W = np.random.default_rng(0).normal(size=toy.features.shape)
    expected = ((normalized(W, toy.features) - normalized(toy.true_gradients, toy.features)) ** 2).mean(axis=1)
    np.testing.assert_array_equal(score(W, toy).per_sample, expected)


# -- R² ----------------------------------------------------------------------------


def test_r2():
    y = np.array([1.0, 2.0, 4.0, 7.0])
    assert r2(y, y) == 1.0
    assert r2(y, np.full(4, y.mean())) == 0.0
    assert r2(y, np.full(4, y.mean() + 100.0)) < 0
    with pytest.raises(ZeroVariance):
        r2(np.ones(4), y)
    with pytest.raises(DimensionMismatch):
        r2(y, y[:3])


# -- infidelity --------------------------------------------------------------------


def test_infidelity_linear_exact_projection():
    m = LinearModel([2.0, -1.0, 0.5], 4.0)
    assert infidelity(m, m.coef, np.array([1.0, 2.0, 3.0]), [0.1, 0.2, 0.3], seed=5) <= 1e-28


def test_infidelity_zero_explanation_is_positive():
    m = LinearModel([2.0, -1.0], 0.0)
    assert infidelity(m, np.zeros(2), np.zeros(2), [0.1, 0.1]) > 0


def test_infidelity_quadratic_is_gaussian_fourth_moment():
    sigma = 0.3
    m = FunctionModel(lambda X: X[:, 0] ** 2, lambda X: 2 * X[:, :1], 1)
    x = np.array([1.7])
    n_mc = 200_000
    value = infidelity(m, 2 * x, x, [sigma], n_mc=n_mc, seed=11)
    # standard error of the mean of I^4 is sqrt(96) sigma^4 / sqrt(n)
    assert value == pytest.approx(3 * sigma**4, abs=5 * np.sqrt(96) * sigma**4 / np.sqrt(n_mc))
    # per-draw identity: the residual is I^2, so the estimate is the sample mean of I^4
    I = np.random.default_rng(11).standard_normal(n_mc) * sigma
    assert value == pytest.approx(np.mean(I**4), rel=1e-9)


def test_infidelity_needs_draws():
    with pytest.raises(ValueError):
        infidelity(LinearModel([1.0], 0.0), [1.0], [0.0], [0.1], n_mc=0)
