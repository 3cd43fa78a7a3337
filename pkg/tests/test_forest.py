import json

import numpy as np
import pytest

from ccforest.data import Dataset
from ccforest.forest import (
    FORMAT_VERSION,
    ForestConfig,
    ModelFormatError,
    default_lambda,
    dumps,
    load,
    loads,
    save,
    train,
)
from ccforest.synth import gen_spirals
from ccforest.tree import LEAF


@pytest.mark.parametrize("d, lam", [(10304, 15), (3, 2), (16, 5), (2, 2), (1, 1), (4, 3)])
def test_default_lambda(d, lam):
    assert default_lambda(d) == lam


def test_config_validation():
    assert ForestConfig(mode="ccf-bag").mode == "ccf_bag"
    with pytest.raises(ValueError):
        ForestConfig(mode="boost")
    with pytest.raises(ValueError):
        ForestConfig(criterion="entropy")
    with pytest.raises(ValueError):
        ForestConfig(n_trees=0)


@pytest.fixture(scope="module")
def blobs():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(c, 0.6, size=(40, 4)) for c in (0, 2, 4)])
    return Dataset.from_arrays(X, np.repeat([0, 1, 2], 40))


@pytest.fixture(scope="module")
def model(blobs):
    return train(blobs, ForestConfig(n_trees=15, seed=3))


def test_probabilities_are_vote_fractions(model, blobs):
    P = model.predict_proba(blobs)
    votes = model.tree_predictions(blobs)
    assert votes.shape == (blobs.n_samples, 15)
    for k in range(3):
        np.testing.assert_array_equal(P[:, k], (votes == k).sum(axis=1) / 15)
    np.testing.assert_allclose(P.sum(axis=1), 1.0)
    np.testing.assert_array_equal(model.predict(blobs), np.argmax(P, axis=1))


def test_accuracy_on_easy_data(model, blobs):
    assert np.mean(model.predict(blobs) == blobs.y) > 0.95


def test_raw_records_and_single_row(model, blobs):
    rec = blobs.X[:3].tolist()
    np.testing.assert_array_equal(model.predict(rec), model.predict(blobs.subset(np.arange(3))))
    assert model.predict_proba(rec[0]).shape == (1, 3)
    with pytest.raises(ValueError, match="schema mismatch"):
        model.predict([[1.0, 2.0]])


def test_tie_goes_to_lowest_class(blobs):
    m = train(blobs, ForestConfig(n_trees=2, seed=0))
    P = m.predict_proba(blobs)
    tied = np.flatnonzero(P.max(axis=1) == 0.5)
    for i in tied:
        assert m.predict(blobs.subset([i]))[0] == np.flatnonzero(P[i] == 0.5)[0]


def test_rf_mode_axis_aligned(blobs):
    m = train(blobs, ForestConfig(n_trees=5, mode="rf"))
    for t in m.trees:
        for j in range(t.n_nodes):
            if t.left[j] != LEAF:
                assert np.count_nonzero(t.weights[j]) == 1


def test_ccf_splits_are_oblique():
    ds = gen_spirals(600, 3, seed=1)
    m = train(ds, ForestConfig(n_trees=3))
    nz = [np.count_nonzero(t.weights[j]) for t in m.trees for j in range(t.n_nodes) if t.left[j] != LEAF]
    assert max(nz) == 2


def test_round_trip_bit_exact(model, blobs, tmp_path):
    path = tmp_path / "m.json"
    save(model, path)
    again = load(path)
    np.testing.assert_array_equal(model.predict_proba(blobs), again.predict_proba(blobs))
    assert dumps(again) == path.read_text()
    assert not (tmp_path / "m.json.tmp").exists()


def test_deterministic_bytes(blobs):
    a = dumps(train(blobs, ForestConfig(n_trees=4, seed=9)))
    b = dumps(train(blobs, ForestConfig(n_trees=4, seed=9)))
    assert a == b
    assert a != dumps(train(blobs, ForestConfig(n_trees=4, seed=10)))


def test_parallel_matches_serial(blobs):
    a = dumps(train(blobs, ForestConfig(n_trees=4, seed=2, n_jobs=1)))
    b = dumps(train(blobs, ForestConfig(n_trees=4, seed=2, n_jobs=2)))
    assert a == b


def test_load_errors(model):
    with pytest.raises(ModelFormatError, match="empty"):
        loads("")
    with pytest.raises(ModelFormatError, match="truncated"):
        loads(dumps(model)[:100])
    d = json.loads(dumps(model))
    d["format"] = "ccf-model/99"
    with pytest.raises(ModelFormatError, match=FORMAT_VERSION):
        loads(json.dumps(d))


def test_single_class_rejected():
    ds = Dataset.from_arrays(np.random.default_rng(0).normal(size=(10, 2)), np.zeros(10, int))
    with pytest.raises(ValueError, match="single class"):
        train(ds, ForestConfig(n_trees=2))


def test_lambda_out_of_range(blobs):
    with pytest.raises(ValueError):
        train(blobs, ForestConfig(n_trees=1, lam=5))
