import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchfinder.bench import (
    PUBLISHED_REFERENCE,
    BenchReport,
    CalibrationError,
    MethodRow,
    QuerySpec,
    accuracy_percent,
    calibrate,
    generate_queries,
    run_bench,
)
from patchfinder.imaging import SliceGrid, crop, resize, to_tensor
from patchfinder.synth import synth_images

GOLDEN_QUAD_TOLERANCE = 0.4942289068960359  # 50 synthetic images, seed 0, holdout 0.2


def test_accuracy_formula():
    assert accuracy_percent(95, 100) == 95.0
    assert accuracy_percent(1, 3) == pytest.approx(33.333333)
    with pytest.raises(ValueError):
        accuracy_percent(0, 0)


def test_report_rows_and_outputs():
    report = BenchReport(4000, 100, 0, "random", rows=[MethodRow("cnn-quad", 95, 100)], tolerances={"quad": 100.0})
    assert report.correct_count == 95
    assert report.accuracy_percent == 95.0
    text = report.to_text()
    assert "cnn-quad" in text and "published-reference" in text and "95.5" in text
    tsv = report.to_tsv().splitlines()
    assert tsv[0].split("\t") == ["method", "dataset", "queries", "correct", "accuracy_percent", "tolerance"]
    assert tsv[1].split("\t")[:5] == ["cnn-quad", "4000", "100", "95", "95.0"]
    assert PUBLISHED_REFERENCE == {"corpus_size": 4000, "query_count": 100, "accuracy_percent": 95.5}


def test_queries_deterministic(small_images):
    a = generate_queries(small_images, 20, "random", seed=4)
    b = generate_queries(small_images, 20, "random", seed=4)
    assert [s for _, s in a] == [s for _, s in b]
    assert all(np.array_equal(p, q) for (p, _), (q, _) in zip(a, b))
    assert [s for _, s in a] != [s for _, s in generate_queries(small_images, 20, "random", seed=5)]


@pytest.mark.parametrize("grid", list(SliceGrid))
def test_exact_policy_on_piece_boundaries(small_images, grid):
    for patch, spec in generate_queries(small_images, 30, "exact", seed=1, grid=grid):
        assert spec.edge == grid.piece_edge
        assert spec.x % grid.piece_edge == 0 and spec.y % grid.piece_edge == 0
        np.testing.assert_array_equal(patch, crop(small_images[spec.source_id], spec.x, spec.y, spec.edge))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32), grid=st.sampled_from(list(SliceGrid)))
def test_random_policy_in_bounds(small_images, seed, grid):
    for patch, spec in generate_queries(small_images, 100, "random", seed=seed, grid=grid):
        assert 48 <= spec.edge <= 96
        assert spec.x >= 0 and spec.y >= 0 and spec.x + spec.edge <= 128 and spec.y + spec.edge <= 128
        assert patch.shape == (grid.piece_edge, grid.piece_edge, 3)


def test_jitter_policy_shifts_toward_centre(small_images):
    base = generate_queries(small_images, 10, "jitter", seed=2, offset=0)
    moved = generate_queries(small_images, 10, "jitter", seed=2, offset=8)
    for (_, a), (_, b) in zip(base, moved):
        assert a.source_id == b.source_id
        assert abs(b.x - a.x) == 8 and abs(b.y - a.y) == 8
        assert abs(b.x + 32 - 64) < abs(a.x + 32 - 64)


def test_query_validation(small_images):
    with pytest.raises(ValueError):
        generate_queries(small_images, 0)
    with pytest.raises(ValueError):
        generate_queries(small_images, 1, "diagonal")


@pytest.fixture(scope="module")
def corpus50():
    return synth_images(50, seed=0)


@pytest.fixture(scope="module")
def encodings50(net, corpus50):
    return net.forward_batch(np.stack([to_tensor(im) for im in corpus50]))


def test_calibration_golden(net, corpus50, encodings50):
    cal = calibrate(net, corpus50, encodings50, "quad", 0.2, seed=0)
    assert cal.tolerance == pytest.approx(GOLDEN_QUAD_TOLERANCE, rel=1e-6)
    assert len(cal.true_distances) == 10 and len(cal.impostor_distances) == 30
    again = calibrate(net, corpus50, encodings50, "quad", 0.2, seed=0)
    assert again.tolerance == cal.tolerance


def test_calibration_exact_crops_separate(net, corpus50, encodings50):
    cal = calibrate(net, corpus50, encodings50, "quad", 0.2, seed=0, policy="exact")
    assert (cal.true_distances == 0).all()
    assert 0 < cal.tolerance < cal.impostor_distances.min()
    assert not cal.overlap
    assert cal.true_summary["max"] == 0.0


def test_calibration_needs_ten_images(net, corpus50, encodings50):
    with pytest.raises(CalibrationError):
        calibrate(net, corpus50[:9], encodings50[:9])


def test_run_bench_exact_policy(tmp_path):
    report = run_bench(None, query_count=6, corpus_size=8, seed=2, crop_policy="exact", tolerance=1.0)
    assert report.row("cnn-quad").accuracy_percent == 100.0
    assert {r.method for r in report.rows} == {"cnn-quad", "kmeans", "knn-L1", "knn-L2"}
    assert set(report.timings) >= {"index", "cnn-quad", "kmeans"}


def test_run_bench_deterministic_fields():
    a = run_bench(None, query_count=4, corpus_size=10, seed=1, modes=("quad", "grid16"), include_baselines=False)
    b = run_bench(None, query_count=4, corpus_size=10, seed=1, modes=("quad", "grid16"), include_baselines=False)
    assert [(r.method, r.correct) for r in a.rows] == [(r.method, r.correct) for r in b.rows]
    assert a.tolerances == b.tolerances
