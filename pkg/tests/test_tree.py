import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccforest.tree import LEAF, GrowConfig, Tree, grow_tree, leaf_label, project
from invariants import check_structure


def _groups(d):
    return [(i, i + 1) for i in range(d)]


def test_pure_node_is_leaf():
    X = np.random.default_rng(0).normal(size=(10, 2))
    t = grow_tree(X, np.full(10, 1), _groups(2), GrowConfig(2), np.random.default_rng(0), n_classes=3)
    assert t.n_nodes == 1 and t.label[0] == 1 and t.stop_reason[0] == "pure"


def test_two_unique_rows_split_between_them():
    r1, r2 = np.array([0.0, 1.0]), np.array([2.0, -1.0])
    X = np.array([r1, r1, r2, r2, r1])
    y = np.array([0, 0, 1, 1, 0])
    t = grow_tree(X, y, _groups(2), GrowConfig(2, projection_bootstrap=False), np.random.default_rng(0))
    assert t.n_nodes == 3
    w = t.weights[0]
    np.testing.assert_array_equal(t.columns[0], [0, 1])
    np.testing.assert_allclose(w, r2 - r1)
    assert t.threshold[0] == pytest.approx(0.5 * (r1 + r2) @ w)
    assert t.label[t.left[0]] == 0 and t.label[t.right[0]] == 1


def best_stump_error(X, y):
    best = 1.0
    for j in range(X.shape[1]):
        for s in np.unique(X[:, j]):
            left = X[:, j] <= s
            for a, b in itertools.product(range(2), repeat=2):
                pred = np.where(left, a, b)
                best = min(best, np.mean(pred != y))
    return best


def test_oblique_split_beats_any_axis_split():
    rng = np.random.default_rng(1)
    n = 200
    # two bands parallel to the anti-diagonal; the class is the side of x + y = 0
    t = rng.uniform(-2, 2, n)
    off = np.where(np.arange(n) % 2 == 0, 0.4, -0.4)
    X = np.column_stack([t + off, -t + off])
    y = (off > 0).astype(int)
    assert best_stump_error(X, y) >= 0.25
    t = grow_tree(X, y, _groups(2), GrowConfig(2, projection_bootstrap=False), np.random.default_rng(0))
    assert t.depth() == 1
    assert np.count_nonzero(t.weights[0]) == 2
    assert np.all(t.predict(X) == y)


def test_leaf_label_rules():
    assert leaf_label([3, 1]) == 0
    assert leaf_label([2, 2], [[3, 5]]) == 1
    assert leaf_label([2, 2], [[5, 3]]) == 0
    assert leaf_label([2, 2, 0], [[4, 4, 9], [1, 1, 1]]) == 0
    # ancestors only break ties among the tied classes
    assert leaf_label([1, 2, 2], [[9, 1, 3]]) == 2


def test_route_single_leaf():
    t = Tree(np.array([LEAF]), np.array([LEAF]), np.array([2]), np.zeros(1), [np.zeros(0, int)],
             [np.zeros(0)], np.array([5]), ["pure"], 3)
    assert t.route(np.array([1e9, -3.0])) == 2


def _stump():
    return Tree(
        left=np.array([1, LEAF, LEAF]),
        right=np.array([2, LEAF, LEAF]),
        label=np.array([-1, 0, 1]),
        threshold=np.array([0.0, 0, 0]),
        columns=[np.array([0]), np.zeros(0, int), np.zeros(0, int)],
        weights=[np.array([1.0]), np.zeros(0), np.zeros(0)],
        n_samples=np.array([2, 1, 1]),
        stop_reason=["", "pure", "pure"],
        n_classes=2,
    )


def test_route_one_split_and_boundary():
    t = _stump()
    assert t.route([-1.0, 5.0]) == 0
    assert t.route([1.0, 5.0]) == 1
    assert t.route([0.0, 5.0]) == 0  # on the hyperplane goes left
    np.testing.assert_array_equal(t.predict(np.array([[-1.0, 0], [1, 0], [0, 0]])), [0, 1, 0])


def test_leaf_on_degenerate_flag():
    # identical rows, mixed labels: the bootstrap can only ever be degenerate
    X = np.vstack([np.zeros((6, 2)), np.ones((1, 2))])
    y = np.array([0, 1, 0, 1, 0, 1, 1])
    cfg = GrowConfig(2, projection_bootstrap=True, leaf_on_degenerate=True)
    t = grow_tree(X, y, _groups(2), cfg, np.random.default_rng(3))
    check_structure(t, X, y)


def test_constant_features_are_dropped():
    rng = np.random.default_rng(4)
    X = np.column_stack([np.ones(30), rng.normal(size=30), np.full(30, -2.0)])
    y = (X[:, 1] > 0).astype(int)
    t = grow_tree(X, y, _groups(3), GrowConfig(1), np.random.default_rng(0))
    for j in range(t.n_nodes):
        if t.left[j] != LEAF:
            assert t.columns[j].tolist() == [1]
    check_structure(t, X, y)


def test_all_features_constant_gives_leaf():
    X = np.ones((8, 2))
    y = np.array([0, 1] * 4)
    t = grow_tree(X, y, _groups(2), GrowConfig(2), np.random.default_rng(0))
    assert t.n_nodes == 1 and t.stop_reason[0] == "no_features"


def test_categorical_group_sampled_together():
    rng = np.random.default_rng(5)
    cat = np.eye(3)[rng.integers(0, 3, 60)]
    X = np.column_stack([rng.normal(size=60), cat])
    y = (cat[:, 2] == 1).astype(int)
    groups = [(0, 1), (1, 4)]
    t = grow_tree(X, y, groups, GrowConfig(1), np.random.default_rng(0))
    for j in range(t.n_nodes):
        if t.left[j] != LEAF:
            assert t.columns[j].tolist() in ([0], [1, 2, 3])
    check_structure(t, X, y, groups)


def test_axis_aligned_mode_has_one_nonzero():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(80, 3))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    t = grow_tree(X, y, _groups(3), GrowConfig(2, projection_bootstrap=False, axis_aligned=True),
                  np.random.default_rng(0))
    for j in range(t.n_nodes):
        if t.left[j] != LEAF:
            assert np.count_nonzero(t.weights[j]) == 1
    check_structure(t, X, y)


def test_determinism():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(120, 4))
    y = (X[:, 0] * X[:, 1] > 0).astype(int) + (X[:, 2] > 1)
    a = grow_tree(X, y, _groups(4), GrowConfig(2), np.random.default_rng(11))
    b = grow_tree(X, y, _groups(4), GrowConfig(2), np.random.default_rng(11))
    assert a.to_dict() == b.to_dict()


def test_serialization_round_trip():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] > X[:, 2]).astype(int)
    t = grow_tree(X, y, _groups(3), GrowConfig(2), np.random.default_rng(0))
    t2 = Tree.from_dict(t.to_dict())
    Z = rng.normal(size=(200, 3))
    np.testing.assert_array_equal(t.apply(Z), t2.apply(Z))
    for w1, w2 in zip(t.weights, t2.weights):
        np.testing.assert_array_equal(w1, w2)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(2, 60),
    d=st.integers(1, 4),
    k=st.integers(2, 4),
    lam=st.integers(1, 4),
    boot=st.booleans(),
    axis=st.booleans(),
    discrete=st.booleans(),
    seed=st.integers(0, 10**6),
)
def test_structural_invariants_random(n, d, k, lam, boot, axis, discrete, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(-2, 3, size=(n, d)).astype(float) if discrete else rng.normal(size=(n, d))
    y = rng.integers(0, k, size=n)
    cfg = GrowConfig(min(lam, d), projection_bootstrap=boot, axis_aligned=axis)
    t = grow_tree(X, y, _groups(d), cfg, np.random.default_rng(seed), n_classes=k)
    check_structure(t, X, y, _groups(d))


def test_projection_independent_of_batch():
    # large cancelling weights: each row must project the same alone or in bulk
    rng = np.random.default_rng(12)
    X = rng.normal(size=(257, 5)) * [1, 1, 1e4, 1e4, 1]
    w = np.array([-1e-7, 3e-8, 3.1e4, -3.1e4, 2.0])
    cols = np.arange(5)
    bulk = project(X, cols, w)
    single = np.array([project(X[i : i + 1], cols, w)[0] for i in range(len(X))])
    np.testing.assert_array_equal(bulk, single)
    np.testing.assert_array_equal(bulk[::3], project(X[::3], cols, w))
