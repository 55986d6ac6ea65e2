"""Query generation, tolerance calibration and the accuracy benchmark."""

from __future__ import annotations

import logging
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines
from .composite import CompositeEncoder
from .imaging import LIBRARY_EDGE, SliceGrid, crop, resize, to_tensor
from .index import build_index, load_library
from .matcher import MatchConfig, Matcher, best_match
from .nn import Network, NetworkSpec
from .synth import write_corpus

log = logging.getLogger(__name__)

CROP_EDGE_RANGE = (48, 96)
PUBLISHED_REFERENCE = {"corpus_size": 4000, "query_count": 100, "accuracy_percent": 95.5}


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class QuerySpec:
    source_id: int
    x: int
    y: int
    edge: int
    policy: str  # "exact", "random" or "jitter"


def _crop_spec(rng: np.random.Generator, source: int, policy: str, grid: SliceGrid, offset: int) -> QuerySpec:
    if policy == "random":
        lo, hi = CROP_EDGE_RANGE
        edge = int(rng.integers(lo, hi + 1))
        x, y = (int(v) for v in rng.integers(0, LIBRARY_EDGE - edge + 1, 2))
        return QuerySpec(source, x, y, edge, policy)
    piece = int(rng.integers(grid.piece_count))
    x, y = grid.piece_origin(piece)
    edge = grid.piece_edge
    if policy == "exact":
        return QuerySpec(source, x, y, edge, policy)
    if policy == "jitter":
        # shift toward the image centre so the crop stays inside the source
        limit = LIBRARY_EDGE - edge
        centre = LIBRARY_EDGE / 2
        x = min(max(x + (offset if x + edge / 2 < centre else -offset), 0), limit)
        y = min(max(y + (offset if y + edge / 2 < centre else -offset), 0), limit)
        return QuerySpec(source, x, y, edge, policy)
    raise ValueError(f"unknown crop policy {policy!r}")


def cut_patch(images, spec: QuerySpec, grid: SliceGrid) -> np.ndarray:
    patch = crop(images[spec.source_id], spec.x, spec.y, spec.edge)
    e = grid.piece_edge
    return resize(patch, e, e)


def generate_queries(images, count: int, policy: str = "random", seed: int = 0, grid="quad", offset: int = 0):
    """Deterministic list of (patch, QuerySpec) cut from library images.

    ``exact`` cuts a whole piece, ``random`` a square of edge 48..96 px at a
    uniform origin, ``jitter`` a piece shifted ``offset`` px toward the centre.
    Patches are resized to the grid's piece edge.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    grid = SliceGrid(grid)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        source = int(rng.integers(len(images)))
        spec = _crop_spec(rng, source, policy, grid, offset)
        out.append((cut_patch(images, spec, grid), spec))
    return out


# -- calibration ----------------------------------------------------------------


def _summary(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    return {
        "count": int(v.size),
        "min": float(v.min()),
        "p5": float(np.percentile(v, 5)),
        "median": float(np.median(v)),
        "p95": float(np.percentile(v, 95)),
        "max": float(v.max()),
    }


@dataclass
class Calibration:
    mode: str
    tolerance: float
    true_distances: np.ndarray
    impostor_distances: np.ndarray
    overlap: bool

    @property
    def true_summary(self) -> dict:
        return _summary(self.true_distances)

    @property
    def impostor_summary(self) -> dict:
        return _summary(self.impostor_distances)


def _pair_distances(encoder: CompositeEncoder, images, encodings, pairs, patches) -> np.ndarray:
    """Best (min over placements) distance for each (candidate id, patch index) pair."""
    out = np.empty(len(pairs))
    for k, (cand, q) in enumerate(pairs):
        x = to_tensor(images[cand])[None]
        traces = encoder.trace(x)
        stored = encodings[cand][None]
        t = to_tensor(patches[q])
        out[k] = min(
            encoder.composite_distances(traces, stored, encoder.patch_cache(t, p), p)[0]
            for p in range(encoder.grid.piece_count)
        )
    return out


def calibrate(
    net: Network,
    images,
    encodings,
    mode="quad",
    holdout_fraction: float = 0.2,
    seed: int = 0,
    policy: str = "random",
    impostors: int = 3,
) -> Calibration:
    """Recommend a tolerance separating true-source and impostor composites.

    The recommendation is the midpoint between the 95th percentile of true
    distances and the 5th percentile of impostor distances.
    """
    n = len(images)
    if n < 10:
        raise CalibrationError(f"calibration needs at least 10 images, corpus has {n}")
    if not 0 < holdout_fraction <= 1:
        raise CalibrationError("holdout fraction must lie in (0, 1]")
    grid = SliceGrid(mode)
    rng = np.random.default_rng(seed)
    held = np.sort(rng.choice(n, size=max(1, round(holdout_fraction * n)), replace=False))
    patches, true_pairs, imp_pairs = [], [], []
    for s in held:
        spec = _crop_spec(rng, int(s), policy, grid, 0)
        patches.append(cut_patch(images, spec, grid))
        q = len(patches) - 1
        true_pairs.append((int(s), q))
        others = rng.choice(n - 1, size=min(impostors, n - 1), replace=False)
        imp_pairs.extend((int(j + (j >= s)), q) for j in others)
    encoder = CompositeEncoder(net, grid)
    true_d = _pair_distances(encoder, images, encodings, true_pairs, patches)
    imp_d = _pair_distances(encoder, images, encodings, imp_pairs, patches)
    hi_true = float(np.percentile(true_d, 95))
    lo_imp = float(np.percentile(imp_d, 5))
    overlap = hi_true > lo_imp
    if overlap:
        log.warning(
            "%s: true p95 %.6g exceeds impostor p5 %.6g; tolerance is a compromise", grid.value, hi_true, lo_imp
        )
    return Calibration(grid.value, (hi_true + lo_imp) / 2, true_d, imp_d, overlap)


# -- benchmark ------------------------------------------------------------------


def accuracy_percent(correct: int, total: int) -> float:
    if total <= 0:
        raise ValueError("total must be positive")
    return 100.0 * correct / total


@dataclass
class MethodRow:
    method: str
    correct: int
    total: int

    @property
    def accuracy_percent(self) -> float:
        return accuracy_percent(self.correct, self.total)


@dataclass
class BenchReport:
    corpus_size: int
    query_count: int
    seed: int
    crop_policy: str
    rows: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def correct_count(self) -> int:
        return self.rows[0].correct if self.rows else 0

    @property
    def accuracy_percent(self) -> float:
        return accuracy_percent(self.correct_count, self.query_count)

    def row(self, method: str) -> MethodRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def table_rows(self):
        for r in self.rows:
            tol = self.tolerances.get(r.method.removeprefix("cnn-"), "")
            yield (r.method, str(self.corpus_size), str(r.total), str(r.correct), f"{r.accuracy_percent:.1f}",
                   f"{tol:.6g}" if tol != "" else "-")
        ref = PUBLISHED_REFERENCE
        yield ("published-reference", str(ref["corpus_size"]), str(ref["query_count"]), "-",
               f"{ref['accuracy_percent']:.1f}", "100")

    def to_text(self) -> str:
        header = ("method", "dataset", "queries", "correct", "accuracy%", "tolerance")
        rows = [header, *self.table_rows()]
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        lines.append(f"seed {self.seed}, crop policy {self.crop_policy}")
        lines.extend(f"{phase}: {secs:.2f}s" for phase, secs in self.timings.items())
        lines.extend(self.notes)
        return "\n".join(lines)

    def to_tsv(self) -> str:
        lines = ["\t".join(("method", "dataset", "queries", "correct", "accuracy_percent", "tolerance"))]
        lines.extend("\t".join(r) for r in self.table_rows())
        lines.append("")
        lines.extend(f"time\t{phase}\t{secs:.3f}" for phase, secs in self.timings.items())
        lines.append(f"seed\t{self.seed}")
        lines.append(f"crop_policy\t{self.crop_policy}")
        return "\n".join(lines) + "\n"


class _Timer:
    def __init__(self, timings: dict, phase: str):
        self.timings, self.phase = timings, phase

    def __enter__(self):
        self.start = time.perf_counter()

    def __exit__(self, *exc):
        self.timings[self.phase] = self.timings.get(self.phase, 0.0) + time.perf_counter() - self.start


def run_bench(
    corpus=None,
    query_count: int = 50,
    modes=("quad",),
    seed: int = 0,
    crop_policy: str = "random",
    tolerance: float | None = None,
    include_baselines: bool = True,
    corpus_size: int = 200,
    holdout_fraction: float = 0.2,
    workers: int = 1,
) -> BenchReport:
    """Index a corpus, calibrate, run every method on generated queries.

    Without ``corpus`` a synthetic corpus of ``corpus_size`` images is written
    to a temporary directory.
    """
    timings: dict = {}
    with tempfile.TemporaryDirectory() as tmp:
        if corpus is None:
            with _Timer(timings, "synthesize"):
                write_corpus(tmp, corpus_size, seed)
            corpus = tmp
        corpus = Path(corpus)
        net = Network(NetworkSpec(seed=seed))
        with _Timer(timings, "index"):
            index, _ = build_index(corpus, net)
            _, images, _ = load_library(corpus, [e.source_path for e in index])
        if len(index) < 2:
            raise ValueError("benchmark needs at least two images")
        encodings = index.stacked_encodings()
        report = BenchReport(len(index), query_count, seed, crop_policy)
        for mode in modes:
            grid = SliceGrid(mode)
            if tolerance is None:
                with _Timer(timings, f"calibrate-{grid.value}"):
                    cal = calibrate(net, images, encodings, grid, holdout_fraction, seed)
                tol = cal.tolerance
                if cal.overlap:
                    report.notes.append(f"{grid.value}: calibration distributions overlap")
            else:
                tol = tolerance
            report.tolerances[grid.value] = tol
            queries = generate_queries(images, query_count, crop_policy, seed, grid)
            matcher = Matcher(net, index, corpus, MatchConfig(grid, tol), workers=workers, images=images)
            with _Timer(timings, f"cnn-{grid.value}"):
                ranked = matcher.query_many([p for p, _ in queries])
            correct = 0
            for results, (_, spec) in zip(ranked, queries):
                winner = best_match(results)
                correct += winner is not None and winner.image_id == spec.source_id
            report.rows.append(MethodRow(f"cnn-{grid.value}", int(correct), query_count))
        if include_baselines:
            queries = generate_queries(images, query_count, crop_policy, seed, SliceGrid.QUAD)
            vectors = baselines.pixel_matrix(images)
            with _Timer(timings, "kmeans"):
                config = baselines.KMeansConfig(k=len(images), seed=seed)
                hits = sum(baselines.kmeans_baseline_query(vectors, p, config) == s.source_id for p, s in queries)
            report.rows.append(MethodRow("kmeans", int(hits), query_count))
            for metric in ("L1", "L2"):
                with _Timer(timings, f"knn-{metric}"):
                    hits = sum(
                        baselines.knn_baseline_query(vectors, p, metric)[0] == s.source_id for p, s in queries
                    )
                report.rows.append(MethodRow(f"knn-{metric}", int(hits), query_count))
    report.timings = timings
    return report
