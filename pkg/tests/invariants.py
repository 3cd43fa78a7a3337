"""Structural checks shared by the tree and acceptance tests."""

import itertools

import numpy as np

from ccforest.tree import LEAF, project


def check_structure(tree, X, y, groups=None):
    """Partition, confinement, leaf coverage and routing invariants."""
    parent = tree.parents()
    assert parent[0] == -1
    assert np.all(parent[1:] >= 0)
    children = np.concatenate([tree.left[tree.left != LEAF], tree.right[tree.right != LEAF]])
    assert len(children) == len(set(children.tolist())) == tree.n_nodes - 1
    assert np.all((tree.left == LEAF) == (tree.right == LEAF))

    # replay the training partition top-down
    rows = {0: np.arange(len(y))}
    for j in range(tree.n_nodes):
        idx = rows[j]
        assert len(idx) == tree.n_samples[j] >= 1
        if tree.left[j] == LEAF:
            assert tree.stop_reason[j] in {"pure", "no_gain", "degenerate", "no_features"}
            if tree.stop_reason[j] == "pure":
                assert len(set(y[idx].tolist())) == 1
            continue
        cols, w = tree.columns[j], tree.weights[j]
        assert np.any(w != 0)
        if groups is not None:
            covered = set(itertools.chain.from_iterable(range(a, b) for a, b in groups))
            assert set(cols.tolist()) <= covered
        go = project(X[idx], cols, w) <= tree.threshold[j]
        assert go.any() and (~go).any()
        rows[tree.left[j]] = idx[go]
        rows[tree.right[j]] = idx[~go]
    leaf_of = np.empty(len(y), dtype=int)
    seen = np.zeros(len(y), dtype=int)
    for j in tree.leaves:
        leaf_of[rows[j]] = j
        seen[rows[j]] += 1
    assert np.all(seen == 1)
    np.testing.assert_array_equal(tree.apply(X), leaf_of)
