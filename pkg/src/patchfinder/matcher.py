"""Decide which library image a query patch was cut from.

For every candidate the patch is pasted over each slice in turn, the
composite is encoded, and the smallest Frobenius distance to the candidate's
stored encoding is compared against an inclusive tolerance.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .composite import CompositeEncoder
from .imaging import ImageDecodeError, SliceGrid, load_image, resize, to_library, to_tensor
from .index import EncodingIndex
from .nn import Network

DEFAULT_TOLERANCE = {SliceGrid.QUAD: 100.0, SliceGrid.GRID16: 200.0}


class CandidateLookupError(LookupError):
    pass


@dataclass(frozen=True)
class MatchConfig:
    mode: SliceGrid = SliceGrid.QUAD
    tolerance: float | None = None

    def __post_init__(self):
        mode = SliceGrid(self.mode)
        object.__setattr__(self, "mode", mode)
        if self.tolerance is None:
            object.__setattr__(self, "tolerance", DEFAULT_TOLERANCE[mode])
        if not self.tolerance >= 0:
            raise ValueError(f"tolerance must be non-negative, got {self.tolerance}")

    @property
    def patch_edge(self) -> int:
        return self.mode.piece_edge


@dataclass(frozen=True)
class MatchResult:
    image_id: int
    best_placement: int
    best_distance: float
    matched: bool
    distances: tuple = ()
    source_path: str = ""


def frobenius_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    return float(np.sqrt(np.dot(diff.ravel(), diff.ravel())))


def make_result(image_id: int, distances, tolerance: float, source_path: str = "") -> MatchResult:
    distances = tuple(float(d) for d in distances)
    best = int(np.argmin(distances))
    return MatchResult(
        image_id=image_id,
        best_placement=best,
        best_distance=distances[best],
        matched=distances[best] <= tolerance,
        distances=distances,
        source_path=source_path,
    )


def rank(results) -> list[MatchResult]:
    return sorted(results, key=lambda r: (r.best_distance, r.image_id))


def best_match(ranked) -> MatchResult | None:
    """Top-ranked accepted candidate, or None when nothing is within tolerance."""
    for result in ranked:
        if result.matched:
            return result
    return None


def prepare_patch(patch: np.ndarray, config: MatchConfig) -> np.ndarray:
    e = config.patch_edge
    return resize(patch, e, e)


def candidate_distances(candidate_img, stored_encoding, patch, net: Network, config: MatchConfig) -> list[float]:
    """Distance between ``stored_encoding`` and each replace-one composite."""
    encoder = CompositeEncoder(net, config.mode)
    x = to_tensor(to_library(candidate_img))[None]
    traces = encoder.trace(x)
    stored = np.asarray(stored_encoding, dtype=np.float32)[None]
    patch_t = to_tensor(prepare_patch(patch, config))
    return [
        float(encoder.composite_distances(traces, stored, encoder.patch_cache(patch_t, p), p)[0])
        for p in range(config.mode.piece_count)
    ]


class Matcher:
    """Exhaustive patch-to-library matching over an encoding index.

    Candidates are processed in chunks; with ``workers > 1`` chunks are
    evaluated concurrently and merged by the deterministic ranking rule.
    """

    def __init__(
        self,
        net: Network,
        index: EncodingIndex,
        image_root,
        config: MatchConfig | None = None,
        chunk_size: int = 4,
        workers: int = 1,
        images=None,
    ):
        if index.network_seed != net.seed:
            raise ValueError(f"index was built with seed {index.network_seed}, network uses {net.seed}")
        self.net = net
        self.index = index
        self.image_root = Path(image_root) if image_root is not None else None
        self.config = config or MatchConfig()
        self.chunk_size = chunk_size
        self.workers = workers
        self.encoder = CompositeEncoder(net, self.config.mode)
        self._images = images

    def candidate_image(self, image_id: int) -> np.ndarray:
        if self._images is not None:
            return self._images[image_id]
        entry = self.index[image_id]
        path = self.image_root / entry.source_path
        try:
            return to_library(load_image(path))
        except ImageDecodeError as exc:
            raise CandidateLookupError(f"entry {image_id} ({entry.source_path}): {exc}") from exc

    def _chunk_distances(self, ids, patch_values) -> np.ndarray:
        x = np.stack([to_tensor(self.candidate_image(i)) for i in ids])
        traces = self.encoder.trace(x)
        stored = np.stack([self.index[i].encoding for i in ids])
        out = np.empty((len(patch_values), len(ids), self.config.mode.piece_count))
        for q, per_placement in enumerate(patch_values):
            for p, values in enumerate(per_placement):
                out[q, :, p] = self.encoder.composite_distances(traces, stored, values, p)
        return out

    def distances(self, patches) -> np.ndarray:
        """(queries, candidates, placements) array of composite distances."""
        patch_values = []
        for patch in patches:
            t = to_tensor(prepare_patch(patch, self.config))
            patch_values.append([self.encoder.patch_cache(t, p) for p in range(self.config.mode.piece_count)])
        ids = list(range(len(self.index)))
        chunks = [ids[i : i + self.chunk_size] for i in range(0, len(ids), self.chunk_size)]
        if self.workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                parts = list(pool.map(lambda c: self._chunk_distances(c, patch_values), chunks))
        else:
            parts = [self._chunk_distances(c, patch_values) for c in chunks]
        if not parts:
            return np.zeros((len(patch_values), 0, self.config.mode.piece_count))
        return np.concatenate(parts, axis=1)

    def query_many(self, patches) -> list[list[MatchResult]]:
        dist = self.distances(patches)
        tol = self.config.tolerance
        return [
            rank(make_result(i, dist[q, i], tol, self.index[i].source_path) for i in range(dist.shape[1]))
            for q in range(dist.shape[0])
        ]

    def query(self, patch) -> list[MatchResult]:
        return self.query_many([patch])[0]


def query(index: EncodingIndex, image_root, patch, net: Network, config: MatchConfig | None = None, workers: int = 1):
    """Ranked MatchResults for one patch; see ``best_match`` for the verdict."""
    return Matcher(net, index, image_root, config, workers=workers).query(patch)
