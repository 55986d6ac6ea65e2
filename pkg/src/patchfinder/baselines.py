"""Raw-pixel KMeans and KNN baselines for patch source lookup."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imaging import to_library, to_tensor


def pixel_vector(img: np.ndarray) -> np.ndarray:
    """Flattened [0, 1] RGB of the image resized to 128x128 (49152 values)."""
    return to_tensor(to_library(img)).reshape(-1).astype(np.float64)


def pixel_matrix(images) -> np.ndarray:
    return np.stack([pixel_vector(im) for im in images])


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    max_iterations: int = 100
    seed: int = 0  # recorded for reports; initialization is deterministic

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    iterations: int
    converged: bool
    objective: list = field(default_factory=list)  # within-cluster SS after each iteration


def squared_distances(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    sq = (
        np.einsum("ij,ij->i", vectors, vectors)[:, None]
        - 2.0 * vectors @ centroids.T
        + np.einsum("ij,ij->i", centroids, centroids)[None, :]
    )
    return np.maximum(sq, 0.0)


def _wcss(vectors, centroids, assignments) -> float:
    diff = vectors - centroids[assignments]
    return float(np.einsum("ij,ij->", diff, diff))


def kmeans_cluster(vectors, config: KMeansConfig) -> KMeansResult:
    """Lloyd's algorithm seeded with the first k vectors.

    Ties go to the lowest cluster index; a cluster that loses all its members
    keeps its previous centroid.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("vectors must be a non-empty 2-D array")
    if config.k > len(x):
        raise ValueError(f"k = {config.k} exceeds the number of vectors ({len(x)})")
    centroids = x[: config.k].copy()
    assignments = None
    objective = []
    for iteration in range(1, config.max_iterations + 1):
        new = np.argmin(squared_distances(x, centroids), axis=1)
        if assignments is not None and np.array_equal(new, assignments):
            return KMeansResult(assignments, centroids, iteration - 1, True, objective)
        assignments = new
        counts = np.bincount(assignments, minlength=config.k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assignments, x)
        filled = counts > 0
        centroids[filled] = sums[filled] / counts[filled, None]
        objective.append(_wcss(x, centroids, assignments))
    converged = np.array_equal(np.argmin(squared_distances(x, centroids), axis=1), assignments)
    return KMeansResult(assignments, centroids, config.max_iterations, converged, objective)


def kmeans_baseline_query(corpus: np.ndarray, patch: np.ndarray, config: KMeansConfig | None = None):
    """Cluster the corpus together with the patch; predict from the patch's cluster.

    Returns the predicted image id, or None when the patch ends up alone.
    """
    corpus = np.asarray(corpus, dtype=np.float64)
    if config is None:
        config = KMeansConfig(k=len(corpus))
    pv = pixel_vector(patch)
    result = kmeans_cluster(np.vstack([corpus, pv]), config)
    mine = result.assignments[-1]
    members = np.flatnonzero(result.assignments[:-1] == mine)
    if len(members) == 0:
        return None
    if len(members) == 1:
        return int(members[0])
    d = ((corpus[members] - pv) ** 2).sum(axis=1)
    return int(members[np.argmin(d)])


def knn_baseline_query(corpus: np.ndarray, patch: np.ndarray, metric: str = "L2", k: int = 2) -> list[int]:
    """Ids of the k nearest corpus vectors, nearest first, ties to the lower id."""
    corpus = np.asarray(corpus, dtype=np.float64)
    if len(corpus) < k:
        raise ValueError(f"corpus needs at least {k} vectors, has {len(corpus)}")
    pv = patch if np.ndim(patch) == 1 else pixel_vector(patch)
    diff = corpus - pv
    if metric.upper() == "L1":
        d = np.abs(diff).sum(axis=1)
    elif metric.upper() == "L2":
        d = np.sqrt((diff * diff).sum(axis=1))
    else:
        raise ValueError(f"unknown metric {metric!r}")
    order = np.argsort(d, kind="stable")
    return [int(i) for i in order[:k]]
