import numpy as np
import pytest

from bfem.kmeans import kmeans, kmeans_plusplus
from bfem.metrics import ari


def test_separated_clouds_recovered():
    rng = np.random.default_rng(0)
    centers = np.array([[0, 0], [20, 0], [0, 20]])
    truth = np.repeat(np.arange(3), 30)
    Y = centers[truth] + rng.standard_normal((90, 2))
    assert ari(kmeans(Y, 3, seed=1), truth) == 1.0


def test_deterministic_given_seed():
    Y = np.random.default_rng(1).standard_normal((100, 5))
    np.testing.assert_array_equal(kmeans(Y, 4, seed=7), kmeans(Y, 4, seed=7))


def test_inertia_monotone():
    Y = np.random.default_rng(2).standard_normal((300, 6))
    _, hist = kmeans(Y, 8, seed=3, return_history=True)
    assert np.all(np.diff(hist) <= 1e-9)


def test_no_empty_cluster_with_duplicates():
    Y = np.repeat(np.arange(4.0)[:, None], 10, axis=0)
    labels = kmeans(Y, 4, seed=0)
    assert np.bincount(labels, minlength=4).min() > 0


def test_plusplus_distinct_indices():
    Y = np.random.default_rng(3).standard_normal((20, 2))
    idx = kmeans_plusplus(Y, 5, np.random.default_rng(0))
    assert len(set(idx.tolist())) == 5


def test_invalid_k():
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), 4)
