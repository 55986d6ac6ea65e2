import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from patchfinder.imaging import (
    GeometryError,
    ImageDecodeError,
    SliceGrid,
    compose,
    composites,
    crop,
    load_image,
    resize,
    save_image,
    slice_image,
    to_library,
    to_tensor,
)

library_images = arrays(np.uint8, (128, 128, 3))


def test_png_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (40, 30, 3), dtype=np.uint8)
    save_image(img, tmp_path / "a.png")
    np.testing.assert_array_equal(load_image(tmp_path / "a.png"), img)


def test_grayscale_expands_to_rgb(tmp_path):
    Image.new("L", (5, 4), 77).save(tmp_path / "g.png")
    img = load_image(tmp_path / "g.png")
    assert img.shape == (4, 5, 3)
    assert (img == 77).all()


def test_jpeg_accepted(tmp_path):
    Image.new("RGB", (8, 8), (10, 200, 30)).save(tmp_path / "a.jpg")
    assert load_image(tmp_path / "a.jpg").shape == (8, 8, 3)


def test_decode_errors(tmp_path):
    with pytest.raises(ImageDecodeError):
        load_image(tmp_path / "missing.png")
    (tmp_path / "junk.png").write_bytes(b"not an image")
    with pytest.raises(ImageDecodeError):
        load_image(tmp_path / "junk.png")
    Image.new("RGB", (4, 4)).save(tmp_path / "a.bmp")
    with pytest.raises(ImageDecodeError, match="unsupported"):
        load_image(tmp_path / "a.bmp")


def test_bilinear_halving_is_block_average():
    img = np.arange(48, dtype=np.uint8).reshape(4, 4, 3) * 5
    want = img.reshape(2, 2, 2, 2, 3).astype(float).mean(axis=(1, 3))
    np.testing.assert_array_equal(resize(img, 2, 2), np.floor(want + 0.5).astype(np.uint8))


def test_resize_constant_and_identity(rng):
    img = np.full((17, 9, 3), 200, dtype=np.uint8)
    assert (resize(img, 64, 50) == 200).all()
    other = rng.integers(0, 256, (128, 128, 3), dtype=np.uint8)
    np.testing.assert_array_equal(to_library(other), other)
    with pytest.raises(GeometryError):
        resize(other, 0, 5)


@settings(max_examples=25, deadline=None)
@given(img=library_images, grid=st.sampled_from(list(SliceGrid)))
def test_slice_compose_round_trip(img, grid):
    pieces = slice_image(img, grid)
    assert len(pieces) == grid.piece_count
    assert all(p.shape == (grid.piece_edge, grid.piece_edge, 3) for p in pieces)
    for i in (0, grid.piece_count - 1):
        np.testing.assert_array_equal(compose(pieces, i, pieces[i]), img)


def test_composites_replace_exactly_one_piece(rng):
    img = rng.integers(0, 256, (128, 128, 3), dtype=np.uint8)
    patch = np.zeros((64, 64, 3), dtype=np.uint8)
    outs = composites(img, patch, "quad")
    assert len(outs) == 4
    for i, out in enumerate(outs):
        x, y = SliceGrid.QUAD.piece_origin(i)
        assert (out[y : y + 64, x : x + 64] == 0).all()
        mask = np.ones((128, 128), bool)
        mask[y : y + 64, x : x + 64] = False
        np.testing.assert_array_equal(out[mask], img[mask])


def test_piece_origins_row_major():
    assert [SliceGrid.QUAD.piece_origin(i) for i in range(4)] == [(0, 0), (64, 0), (0, 64), (64, 64)]
    assert SliceGrid.GRID16.piece_origin(5) == (32, 32)
    with pytest.raises(GeometryError):
        SliceGrid.QUAD.piece_origin(4)


def test_geometry_errors(rng):
    img = rng.integers(0, 256, (128, 128, 3), dtype=np.uint8)
    with pytest.raises(GeometryError):
        slice_image(img[:100], "quad")
    with pytest.raises(GeometryError):
        compose(slice_image(img, "quad"), 0, np.zeros((32, 32, 3), np.uint8))
    with pytest.raises(GeometryError):
        crop(img, 100, 0, 64)


def test_to_tensor_range():
    t = to_tensor(np.array([[[0, 128, 255]]], dtype=np.uint8))
    assert t.dtype == np.float32
    np.testing.assert_allclose(t[0, 0], [0.0, 128 / 255, 1.0])
