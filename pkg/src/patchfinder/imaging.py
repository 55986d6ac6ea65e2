"""Image loading, bilinear resizing, slicing and replace-one composition.

Images are uint8 numpy arrays shaped (height, width, 3).
"""

from __future__ import annotations

import math
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

LIBRARY_EDGE = 128
SUPPORTED_FORMATS = {"PNG", "JPEG"}


class ImageDecodeError(OSError):
    def __init__(self, path, reason: str = "cannot decode image"):
        super().__init__(f"{path}: {reason}")
        self.path = Path(path)


class GeometryError(ValueError):
    pass


class SliceGrid(str, Enum):
    QUAD = "quad"
    GRID16 = "grid16"

    @property
    def per_side(self) -> int:
        return 2 if self is SliceGrid.QUAD else 4

    @property
    def piece_count(self) -> int:
        return self.per_side**2

    @property
    def piece_edge(self) -> int:
        return LIBRARY_EDGE // self.per_side

    def piece_origin(self, index: int) -> tuple[int, int]:
        """(x, y) of the piece's upper-left pixel in the 128x128 source."""
        if not 0 <= index < self.piece_count:
            raise GeometryError(f"piece index {index} out of range for {self.value}")
        row, col = divmod(index, self.per_side)
        return col * self.piece_edge, row * self.piece_edge


def load_image(path) -> np.ndarray:
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format not in SUPPORTED_FORMATS:
                raise ImageDecodeError(path, f"unsupported format {im.format}")
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except FileNotFoundError as exc:
        raise ImageDecodeError(path, "no such file") from exc
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, ImageDecodeError):
            raise
        raise ImageDecodeError(path, str(exc) or type(exc).__name__) from exc


def save_image(img: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(img, dtype=np.uint8), "RGB").save(path)


def _check_rgb(img) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise GeometryError(f"expected a uint8 (height, width, 3) image, got {img.dtype} {img.shape}")
    return img


def _sample_axis(n_in: int, n_out: int):
    # half-pixel centers, clamped to the edge samples
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    img = _check_rgb(img)
    if out_w < 1 or out_h < 1:
        raise GeometryError("output dimensions must be at least 1")
    h, w = img.shape[:2]
    if (w, h) == (out_w, out_h):
        return img.copy()
    y0, y1, fy = _sample_axis(h, out_h)
    x0, x1, fx = _sample_axis(w, out_w)
    src = img.astype(np.float64)
    fx = fx[None, :, None]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    fy = fy[:, None, None]
    out = top * (1 - fy) + bottom * fy
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def to_library(img: np.ndarray) -> np.ndarray:
    return resize(img, LIBRARY_EDGE, LIBRARY_EDGE)


def slice_image(img: np.ndarray, grid: SliceGrid | str) -> list[np.ndarray]:
    """Cut a 128x128 image into row-major pieces starting at the upper left."""
    img = _check_rgb(img)
    grid = SliceGrid(grid)
    if img.shape[:2] != (LIBRARY_EDGE, LIBRARY_EDGE):
        raise GeometryError(f"slicing needs a {LIBRARY_EDGE}x{LIBRARY_EDGE} image, got {img.shape[1]}x{img.shape[0]}")
    e = grid.piece_edge
    pieces = []
    for i in range(grid.piece_count):
        x, y = grid.piece_origin(i)
        pieces.append(img[y : y + e, x : x + e].copy())
    return pieces


def compose(pieces: list[np.ndarray], replace_index: int, patch: np.ndarray) -> np.ndarray:
    """Reassemble pieces row-major, substituting ``patch`` at ``replace_index``."""
    per_side = math.isqrt(len(pieces))
    if per_side * per_side != len(pieces) or per_side == 0:
        raise GeometryError(f"piece count {len(pieces)} is not a square grid")
    if not 0 <= replace_index < len(pieces):
        raise GeometryError(f"replace_index {replace_index} out of range for {len(pieces)} pieces")
    patch = _check_rgb(patch)
    edge_h, edge_w = pieces[0].shape[:2]
    if patch.shape[:2] != (edge_h, edge_w):
        raise GeometryError(f"patch is {patch.shape[1]}x{patch.shape[0]}, pieces are {edge_w}x{edge_h}")
    out = np.empty((edge_h * per_side, edge_w * per_side, 3), dtype=np.uint8)
    for i, piece in enumerate(pieces):
        if piece.shape[:2] != (edge_h, edge_w):
            raise GeometryError("pieces differ in size")
        row, col = divmod(i, per_side)
        out[row * edge_h : (row + 1) * edge_h, col * edge_w : (col + 1) * edge_w] = (
            patch if i == replace_index else piece
        )
    return out


def composites(img: np.ndarray, patch: np.ndarray, grid: SliceGrid | str) -> list[np.ndarray]:
    pieces = slice_image(img, grid)
    return [compose(pieces, i, patch) for i in range(len(pieces))]


def to_tensor(img: np.ndarray) -> np.ndarray:
    """Scale 8-bit RGB to float32 in [0, 1]."""
    return _check_rgb(img).astype(np.float32) / np.float32(255)


def crop(img: np.ndarray, x: int, y: int, edge: int) -> np.ndarray:
    img = _check_rgb(img)
    h, w = img.shape[:2]
    if x < 0 or y < 0 or x + edge > w or y + edge > h:
        raise GeometryError(f"crop ({x}, {y}, {edge}) does not fit a {w}x{h} image")
    return img[y : y + edge, x : x + edge].copy()
