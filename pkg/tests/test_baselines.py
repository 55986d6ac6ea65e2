import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from patchfinder.baselines import (
    KMeansConfig,
    kmeans_baseline_query,
    kmeans_cluster,
    knn_baseline_query,
    pixel_matrix,
    pixel_vector,
    squared_distances,
)


def lloyd_oracle(x, k, iters=100):
    """Plain-loop Lloyd with first-k init and stale centroids for empty clusters."""
    c = [row.copy() for row in x[:k]]
    assign = None
    for _ in range(iters):
        new = [min(range(k), key=lambda j: (float(((v - c[j]) ** 2).sum()), j)) for v in x]
        if new == assign:
            break
        assign = new
        for j in range(k):
            members = [v for v, a in zip(x, assign) if a == j]
            if members:
                c[j] = np.mean(members, axis=0)
    return assign


@settings(max_examples=40, deadline=None)
@given(
    x=arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 4)), elements=st.integers(0, 9).map(float)),
    kfrac=st.floats(0.1, 1.0),
)
def test_kmeans_matches_loop_oracle(x, kfrac):
    k = max(1, int(kfrac * len(x)))
    got = kmeans_cluster(x, KMeansConfig(k))
    assert got.assignments.tolist() == lloyd_oracle(x, k)


def test_objective_non_increasing(rng):
    x = rng.standard_normal((60, 3))
    res = kmeans_cluster(x, KMeansConfig(5))
    assert res.converged
    assert all(b <= a + 1e-9 for a, b in zip(res.objective, res.objective[1:]))


def test_duplicates_share_cluster_and_leave_one_empty(rng):
    x = rng.random((6, 10))
    x[4] = x[1]
    res = kmeans_cluster(x, KMeansConfig(len(x)))
    assert res.assignments[1] == res.assignments[4] == 1
    assert np.bincount(res.assignments, minlength=len(x)).tolist().count(0) == 1


def test_squared_distances_nonnegative(rng):
    x = rng.random((5, 4))
    d = squared_distances(x, x)
    assert (d >= 0).all()
    np.testing.assert_allclose(np.diag(d), 0, atol=1e-12)


def test_kmeans_config_validation():
    with pytest.raises(ValueError):
        KMeansConfig(0)
    with pytest.raises(ValueError):
        kmeans_cluster(np.zeros((2, 2)), KMeansConfig(3))


def test_pixel_vector_length(rng):
    v = pixel_vector(rng.integers(0, 256, (64, 64, 3), dtype=np.uint8))
    assert v.shape == (128 * 128 * 3,) and v.min() >= 0 and v.max() <= 1


def test_knn_exact_copy_first(small_images):
    corpus = pixel_matrix(small_images)
    for metric in ("L1", "L2"):
        assert knn_baseline_query(corpus, small_images[6], metric)[0] == 6
    with pytest.raises(ValueError):
        knn_baseline_query(corpus[:1], small_images[0])
    with pytest.raises(ValueError):
        knn_baseline_query(corpus, small_images[0], "cosine")


def test_knn_ties_to_lower_id():
    corpus = np.array([[1.0], [0.0], [1.0]])
    assert knn_baseline_query(corpus, np.array([0.5]), "L2") == [0, 1]


def flat(value):
    return np.full((128, 128, 3), value, dtype=np.uint8)


def test_kmeans_query_outcomes():
    # constant images behave like points on a line
    corpus = pixel_matrix([flat(0), flat(255)])
    assert kmeans_baseline_query(corpus, flat(10)) == 0  # single member
    corpus = pixel_matrix([flat(0), flat(40)])
    assert kmeans_baseline_query(corpus, flat(30), KMeansConfig(1)) == 1  # nearest of several
    # patch pulls centroid 1 away; image 1 migrates and the patch ends up alone
    assert kmeans_baseline_query(corpus, flat(200)) is None
