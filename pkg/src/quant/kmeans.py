"""
Lloyd's k-means with k-means++ seeding, used to initialise the codebook
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.core.errors import InvalidInputError, NumericError
from src.core.logger import get_logger
from src.core.rng import derive_seed, make_rng

logger = get_logger(__name__)


@dataclass
class Codebook:
    """The K x D centroid stack M shared by both ASR branches"""

    centroids: np.ndarray

    def __post_init__(self):
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 1:
            raise InvalidInputError(f"codebook must be K x D with K >= 1, got {self.centroids.shape}")
        if not np.all(np.isfinite(self.centroids)):
            raise NumericError("codebook contains non-finite centroids")

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    @property
    def D(self) -> int:
        return self.centroids.shape[1]


def squared_distances(points: np.ndarray, centroids: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """N x K matrix of squared Euclidean distances, computed from differences"""
    out = np.empty((points.shape[0], centroids.shape[0]), dtype=np.result_type(points, centroids))
    for start in range(0, points.shape[0], chunk):
        diff = points[start : start + chunk, None, :] - centroids[None, :, :]
        out[start : start + chunk] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def nearest(distances: np.ndarray) -> np.ndarray:
    """Row-wise argmin; ties go to the lowest index"""
    return np.argmin(distances, axis=1)


def assign_hard(x: np.ndarray, codebook: Codebook) -> int:
    """Token id of the centroid closest to x"""
    x = np.asarray(x)
    if x.shape != (codebook.D,):
        raise InvalidInputError(f"expected a vector of dim {codebook.D}, got shape {x.shape}")
    return int(nearest(squared_distances(x[None, :], codebook.centroids))[0])


def kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new centroid drawn with probability proportional to D^2"""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=points.dtype)
    centroids[0] = points[rng.integers(n)]
    closest = squared_distances(points, centroids[:1])[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # every point already coincides with a centroid
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centroids[i] = points[idx]
        closest = np.minimum(closest, squared_distances(points, centroids[i : i + 1])[:, 0])
    return centroids


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int, tol: float) -> Tuple[np.ndarray, List[float]]:
    centroids = kmeans_plusplus(points, k, rng)
    history: List[float] = []
    for iteration in range(max_iter):
        distances = squared_distances(points, centroids)
        labels = nearest(distances)
        point_cost = distances[np.arange(points.shape[0]), labels]
        history.append(float(point_cost.sum()))

        if len(history) >= 2 and history[-2] - history[-1] < tol:
            break
        if iteration == max_iter - 1:
            break

        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, points)
        updated = centroids.copy()
        filled = counts > 0
        updated[filled] = sums[filled] / counts[filled, None]

        # Empty clusters take the points currently worst served, one point each
        empty = np.flatnonzero(~filled)
        if empty.size:
            order = np.argsort(-point_cost, kind="stable")
            for cluster, idx in zip(empty, order):
                updated[cluster] = points[idx]
            logger.debug(f"Re-seeded {empty.size} empty clusters at iteration {iteration}")
        centroids = updated
    return centroids, history


def lloyd_fit(
    points: np.ndarray,
    K: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
    n_init: int = 1,
) -> Tuple[Codebook, List[float]]:
    """
    Fit K centroids with Lloyd iterations from k-means++ seeding

    Args:
        points: N x D data
        K: number of clusters
        seed: seed of the run; restart i uses the sub-stream (seed, "kmeans", i)
        max_iter: maximum number of assignment steps
        tol: stop once the inertia improvement falls below tol
        n_init: independent restarts, the lowest final inertia wins

    Returns:
        Codebook and the per-iteration inertia history of the kept run

    Raises:
        InvalidInputError: N < K or fewer than K distinct points
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise InvalidInputError(f"points must be N x D, got shape {points.shape}")
    if K < 1 or points.shape[0] < K:
        raise InvalidInputError(f"need N >= K >= 1, got N={points.shape[0]}, K={K}")
    if np.unique(points, axis=0).shape[0] < K:
        raise InvalidInputError(f"need at least K={K} distinct points")
    if not np.all(np.isfinite(points)):
        raise InvalidInputError("points contain non-finite values")

    best_centroids, best_history = None, None
    for run in range(n_init):
        rng = make_rng(derive_seed(seed, "kmeans", run))
        centroids, history = _lloyd(points, K, rng, max_iter, tol)
        if best_history is None or history[-1] < best_history[-1]:
            best_centroids, best_history = centroids, history

    logger.info(
        f"k-means fit: K={K}, N={points.shape[0]}, iterations={len(best_history)}, "
        f"inertia={best_history[-1]:.4f}"
    )
    return Codebook(best_centroids), best_history
