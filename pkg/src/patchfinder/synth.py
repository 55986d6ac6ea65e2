"""Deterministic synthetic image corpora for tests and desk-scale benchmarks."""

from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .imaging import LIBRARY_EDGE


HUE_SPREAD = 0.06


def _theme_color(rng: np.random.Generator, hue: float) -> tuple[int, int, int]:
    h = (hue + rng.normal(0.0, HUE_SPREAD)) % 1.0
    rgb = colorsys.hsv_to_rgb(h, rng.uniform(0.3, 1.0), rng.uniform(0.2, 1.0))
    return tuple(int(255 * c) for c in rgb)


def synth_image(rng: np.random.Generator, edge: int = LIBRARY_EDGE) -> np.ndarray:
    """Gradient background with random shapes and mild noise.

    Colours cluster around one hue per image, the way a photograph tends to
    have an overall colour cast.
    """
    hue = rng.random()
    c0, c1 = np.array(_theme_color(rng, hue)), np.array(_theme_color(rng, hue))
    angle = rng.uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:edge, 0:edge] / (edge - 1)
    t = (np.cos(angle) * xx + np.sin(angle) * yy + 1.5) / 3.0
    base = c0 * (1 - t[..., None]) + c1 * t[..., None]
    im = Image.fromarray(base.astype(np.uint8), "RGB")
    draw = ImageDraw.Draw(im)
    for _ in range(int(rng.integers(6, 14))):
        kind = rng.integers(0, 3)
        x0, y0 = rng.integers(-edge // 4, edge, 2)
        w, h = rng.integers(edge // 10, edge // 2, 2)
        color = _theme_color(rng, hue)
        box = [int(x0), int(y0), int(x0 + w), int(y0 + h)]
        if kind == 0:
            draw.rectangle(box, fill=color)
        elif kind == 1:
            draw.ellipse(box, fill=color)
        else:
            draw.line(box, fill=color, width=int(rng.integers(2, 8)))
    arr = np.asarray(im, dtype=np.int16)
    arr = arr + rng.integers(-12, 13, (edge, edge, 3))
    return np.clip(arr, 0, 255).astype(np.uint8)


def synth_images(count: int, seed: int = 0, edge: int = LIBRARY_EDGE) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [synth_image(rng, edge) for _ in range(count)]


def write_corpus(directory, count: int, seed: int = 0, edge: int = LIBRARY_EDGE) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(synth_images(count, seed, edge)):
        path = directory / f"img_{i:05d}.png"
        Image.fromarray(img, "RGB").save(path)
        paths.append(path)
    return paths
