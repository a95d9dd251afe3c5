import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invfeat.features import feature_matrix
from invfeat.learning import (DEFAULT_LAMBDA_GRID, accuracy, bag_of_words, kernel_rls_predict,
                              kernel_rls_train, nn_classify, nn_classify_batch, one_vs_all,
                              rls_path, rls_predict, rls_train, select_lambda)
from invfeat.datasets import one_hot
from invfeat.templates import build_projection_table, make_bank


def normal_residual(F, labels, T, model):
    N = F.shape[0]
    Y = one_vs_all(labels, T)
    lhs = (F.T @ F + N * model.lam * np.eye(F.shape[1])) @ model.W
    rhs = F.T @ Y
    return np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-300)


def test_two_point_exact_solve():
    F = np.array([[1.0, 0.0], [0.0, 1.0]])
    y = np.array([0, 1])
    lam = 1e-6
    model = rls_train(F, y, 2, lam)
    # closed form: (I + 2 lam I) W = Y  =>  W = Y / (1 + 2 lam)
    np.testing.assert_allclose(model.W, one_vs_all(y, 2) / (1 + 2 * lam), rtol=1e-12)
    assert accuracy(rls_predict(model, F), y) == 1.0


def test_zero_targets_give_zero_weights():
    # +/-1 targets are never all zero, but F^T Y is when the two rows cancel
    F = np.array([[1.0], [-1.0]])
    model = rls_train(F, np.array([0, 0]), 1, 0.1)
    np.testing.assert_allclose(model.W, 0, atol=1e-15)


def test_large_lambda_shrinks_weights(rng):
    F = rng.standard_normal((50, 5))
    y = rng.integers(0, 3, 50)
    norms = [np.linalg.norm(rls_train(F, y, 3, lam).W) for lam in (1e-3, 1, 1e3, 1e6)]
    assert all(a > b for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-5


def test_primal_and_dual_agree(rng):
    F = rng.standard_normal((20, 60))      # D > N: dual branch
    y = rng.integers(0, 2, 20)
    m = rls_train(F, y, 2, 0.01)
    W = np.linalg.solve(F.T @ F + 20 * 0.01 * np.eye(60), F.T @ one_vs_all(y, 2))
    np.testing.assert_allclose(m.W, W, atol=1e-9)
    assert normal_residual(F, y, 2, m) <= 1e-8


def test_validation(rng):
    F = rng.standard_normal((5, 2))
    y = np.zeros(5, dtype=int)
    with pytest.raises(ValueError):
        rls_train(F, y, 1, 0.0)
    bad = F.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        rls_train(bad, y, 1, 1.0)
    with pytest.raises(ValueError):
        rls_predict(rls_train(F, y, 1, 1.0), np.zeros((1, 3)))


def test_single_point_prediction():
    F = np.array([[0.3, 0.4, 0.0]])
    model = rls_train(F, np.array([1]), 2, 1e-8)
    assert rls_predict(model, F)[0] == 1


def test_argmax_scale_invariance(rng):
    F = rng.standard_normal((30, 4))
    y = rng.integers(0, 3, 30)
    m = rls_train(F, y, 3, 0.1)
    from invfeat.learning import RlsModel
    scaled = RlsModel(m.W / 2.5, m.lam, 4, 3)
    np.testing.assert_array_equal(rls_predict(m, F), rls_predict(scaled, F * 2.5))


def test_ties_go_to_smallest_class():
    from invfeat.learning import RlsModel
    model = RlsModel(np.zeros((2, 3)), 1.0, 2, 3)
    assert rls_predict(model, np.ones((1, 2)))[0] == 0


def test_prediction_invariant_under_group(s5, xperm):
    table = build_projection_table(make_bank(40, 8, seed=1), s5.elements, s5)
    idx = np.random.default_rng(0).choice(len(xperm), 300, replace=False)
    F = feature_matrix(xperm.points[idx], table, 10)
    model = rls_train(F, xperm.labels[idx], 2, 1e-4)
    base = rls_predict(model, F[:20])
    for g in s5.elements[::9]:
        Fg = feature_matrix(s5.apply(g, xperm.points[idx[:20]]), table, 10)
        np.testing.assert_array_equal(rls_predict(model, Fg), base)


def test_nn_examples(s5, xperm):
    train = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    labels = np.array([5, 7, 9])
    assert nn_classify(train, labels, np.array([1.0, 1.0])) == 7     # tie -> lowest index
    assert nn_classify(train[:1], labels[:1], np.array([3.0, -2.0])) == 5
    with pytest.raises(ValueError):
        nn_classify(np.zeros((0, 2)), np.zeros(0), np.zeros(2))
    np.testing.assert_array_equal(nn_classify_batch(train, labels, train), [5, 7, 7])
    table = build_projection_table(make_bank(40, 6, seed=2), s5.elements, s5)
    idx = np.arange(0, 32768, 1111)
    F = feature_matrix(xperm.points[idx], table, 10)
    g = s5.elements[77]
    Fq = feature_matrix(s5.apply(g, xperm.points[idx]), table, 10)
    np.testing.assert_array_equal(nn_classify_batch(F, xperm.labels[idx], Fq), xperm.labels[idx])


def test_bag_of_words():
    x = one_hot(np.array([[0, 0, 0, 0, 0]]))[0]
    np.testing.assert_array_equal(bag_of_words(x), [5, 0, 0, 0, 0, 0, 0, 0])
    seq = np.array([3, 1, 4, 1, 5])
    a = bag_of_words(one_hot(seq[None])[0] / np.sqrt(5))
    b = bag_of_words(one_hot(seq[::-1][None])[0])
    np.testing.assert_array_equal(a, b)
    assert a.sum() == 5
    with pytest.raises(ValueError):
        bag_of_words(np.ones(40))
    with pytest.raises(ValueError):
        bag_of_words(np.zeros(39))


def test_select_lambda(rng, caplog):
    F = rng.standard_normal((60, 3))
    y = (F[:, 0] > 0).astype(int)
    assert select_lambda(F, y, [0.5]) == 0.5
    assert select_lambda(F, y, seed=4) == select_lambda(F, y, seed=4)
    assert select_lambda(F, y) in DEFAULT_LAMBDA_GRID
    with caplog.at_level(logging.WARNING):
        lam = select_lambda(F, np.zeros(60, dtype=int), [1e-4, 1e-2, 1.0])
    assert lam == 1e-2 and "falling back" in caplog.text


def test_select_lambda_ties_prefer_larger():
    # perfectly separable with a wide margin: every lambda in the grid is perfect on holdout
    F = np.vstack([np.tile([1.0, 0.0], (20, 1)), np.tile([0.0, 1.0], (20, 1))])
    y = np.repeat([0, 1], 20)
    assert select_lambda(F, y, [1e-6, 1e-3, 1e-1]) == 1e-1


def test_separable_accuracy_nonincreasing_for_huge_lambda(rng):
    F = np.vstack([rng.normal(2, 0.3, (40, 2)), rng.normal(-2, 0.3, (40, 2))])
    F = np.hstack([F, np.ones((80, 1))])
    y = np.repeat([0, 1], 40)
    accs = [accuracy(rls_predict(rls_train(F, y, 2, lam), F), y) for lam in (1e2, 1e4, 1e6)]
    assert accs[0] >= accs[1] >= accs[2] or accs == [1.0, 1.0, 1.0]


def test_kernel_rls_matches_linear_rls(rng):
    F = rng.standard_normal((25, 40))
    y = rng.integers(0, 3, 25)
    alpha = kernel_rls_train(F @ F.T, y, 3, 0.05)
    Q = rng.standard_normal((7, 40))
    np.testing.assert_array_equal(kernel_rls_predict(Q @ F.T, alpha), rls_predict(rls_train(F, y, 3, 0.05), Q))


def test_rls_path_matches_individual(rng):
    F = rng.standard_normal((30, 4))
    y = rng.integers(0, 2, 30)
    for model in rls_path(F, y, 2, [1e-3, 1e-1]):
        np.testing.assert_allclose(model.W, rls_train(F, y, 2, model.lam).W, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(N=st.integers(1, 40), D=st.integers(1, 40), T=st.integers(1, 4),
       lam=st.floats(1e-6, 10), seed=st.integers(0, 10_000))
def test_normal_equation_residual_property(N, D, T, lam, seed):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((N, D))
    y = rng.integers(0, T, N)
    assert normal_residual(F, y, T, rls_train(F, y, T, lam)) <= 1e-8
