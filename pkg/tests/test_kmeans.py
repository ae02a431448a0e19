import itertools

import numpy as np
import pytest

from src.core.errors import InvalidInputError
from src.quant.kmeans import Codebook, assign_hard, lloyd_fit, squared_distances

FOUR_POINTS = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])


def _best_two_partition(points):
    best = np.inf
    n = len(points)
    for mask in itertools.product([0, 1], repeat=n):
        labels = np.array(mask)
        if labels.min() == labels.max():
            continue
        cost = sum(((points[labels == c] - points[labels == c].mean(axis=0)) ** 2).sum() for c in (0, 1))
        best = min(best, cost)
    return best


def test_k_equals_n_reaches_zero_inertia(rng):
    points = rng.standard_normal((6, 3))
    _, history = lloyd_fit(points, 6, seed=0)
    assert history[-1] == pytest.approx(0.0, abs=1e-12)


def test_four_point_case_matches_brute_force():
    codebook, history = lloyd_fit(FOUR_POINTS, 2, seed=0, n_init=4)
    assert _best_two_partition(FOUR_POINTS) == pytest.approx(1.0)
    assert history[-1] == pytest.approx(1.0)
    centroids = sorted(map(tuple, np.round(codebook.centroids, 6)))
    assert centroids == [(0.0, 0.5), (10.0, 0.5)]


@pytest.mark.parametrize("seed", range(50))
def test_inertia_never_increases(seed):
    rng = np.random.default_rng(seed)
    points = rng.standard_normal((60, 2)) + rng.integers(0, 4, size=(60, 1)) * 3.0
    _, history = lloyd_fit(points, 5, seed=seed, max_iter=50, tol=0.0)
    assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))


def test_fitted_centroids_are_distinct(rng):
    codebook, _ = lloyd_fit(rng.standard_normal((200, 4)), 8, seed=1)
    assert np.unique(codebook.centroids, axis=0).shape[0] == 8
    assert np.all(np.isfinite(codebook.centroids))


def test_same_seed_same_codebook(rng):
    points = rng.standard_normal((100, 3))
    first, _ = lloyd_fit(points, 4, seed=9, n_init=2)
    second, _ = lloyd_fit(points, 4, seed=9, n_init=2)
    assert first.centroids.tobytes() == second.centroids.tobytes()


def test_too_few_points():
    with pytest.raises(InvalidInputError):
        lloyd_fit(np.zeros((2, 2)), 3, seed=0)
    with pytest.raises(InvalidInputError, match="distinct"):
        lloyd_fit(np.zeros((5, 2)), 2, seed=0)


class TestAssignHard:
    def test_single_centroid(self, rng):
        codebook = Codebook(np.ones((1, 3)))
        assert all(assign_hard(x, codebook) == 0 for x in rng.standard_normal((5, 3)))

    def test_ties_go_to_lowest_index(self):
        codebook = Codebook(np.array([[1.0, 0.0], [-1.0, 0.0]]))
        assert assign_hard(np.array([0.0, 3.0]), codebook) == 0

    def test_matches_exhaustive_scan(self, rng):
        codebook = Codebook(rng.standard_normal((8, 4)))
        for x in rng.standard_normal((20, 4)).astype(np.float32):
            scan = [float(np.sum((x - m) ** 2)) for m in codebook.centroids]
            assert assign_hard(x, codebook) == int(np.argmin(scan))

    def test_dimension_checked(self):
        with pytest.raises(InvalidInputError):
            assign_hard(np.zeros(3), Codebook(np.zeros((2, 2))))


def test_squared_distances_chunking(rng):
    points, centroids = rng.standard_normal((10, 3)), rng.standard_normal((4, 3))
    assert np.allclose(squared_distances(points, centroids, chunk=3), squared_distances(points, centroids))
