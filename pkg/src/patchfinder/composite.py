"""Encoding replace-one composites without re-running the whole network.

A composite differs from its candidate only inside the replaced piece, so in
every activation map only the cells whose receptive field reaches the piece
can change (the *touched* rectangle). Of those, the cells whose receptive
field lies entirely inside the piece (plus image-border padding) depend on the
patch alone and are shared by every candidate (the *patch-only* rectangle).
Only the remaining *mixed* cells are evaluated per candidate, reading
unchanged neighbours from the candidate's cached activation maps.

All cells go through the same window primitives as the full forward pass, so
the result is bit-identical to encoding the composite from scratch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import LIBRARY_EDGE, SliceGrid
from .nn import Layer, Network


@dataclass(frozen=True)
class Rect:
    r0: int
    r1: int
    c0: int
    c1: int

    @property
    def empty(self) -> bool:
        return self.r0 >= self.r1 or self.c0 >= self.c1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.r1 - self.r0, self.c1 - self.c0)

    def rows(self, offset: int = 0) -> slice:
        return slice(self.r0 - offset, self.r1 - offset)

    def cols(self, offset: int = 0) -> slice:
        return slice(self.c0 - offset, self.c1 - offset)


EMPTY = Rect(0, 0, 0, 0)


def _touched(layer: Layer, n_in: int, lo: int, hi: int) -> tuple[int, int]:
    if lo >= hi:
        return (0, 0)
    s, r = layer.stride, layer.radius
    first = max(0, -((r - lo) // s))  # ceil((lo - r) / s)
    last = min(layer.out_size(n_in) - 1, (hi - 1 + r) // s)
    return (first, last + 1) if first <= last else (0, 0)


def _pure(layer: Layer, n_in: int, lo: int, hi: int) -> tuple[int, int]:
    if lo >= hi:
        return (0, 0)
    s, r = layer.stride, layer.radius
    n_out = layer.out_size(n_in)
    first = 0 if lo == 0 else -((-(lo + r)) // s)
    last = n_out - 1 if hi == n_in else (hi - 1 - r) // s
    return (first, last + 1) if first <= last else (0, 0)


def _rect(rows: tuple[int, int], cols: tuple[int, int]) -> Rect:
    r = Rect(rows[0], rows[1], cols[0], cols[1])
    return EMPTY if r.empty else r


def _minus(outer: Rect, inner: Rect) -> list[Rect]:
    if inner.empty:
        return [outer]
    bands = [
        Rect(outer.r0, inner.r0, outer.c0, outer.c1),
        Rect(inner.r1, outer.r1, outer.c0, outer.c1),
        Rect(inner.r0, inner.r1, outer.c0, inner.c0),
        Rect(inner.r0, inner.r1, inner.c1, outer.c1),
    ]
    return [b for b in bands if not b.empty]


def _mask_rects(mask: np.ndarray) -> list[Rect]:
    """Cover a boolean mask with rectangles (row groups sharing a column pattern)."""
    rects = []
    n = mask.shape[0]
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and np.array_equal(mask[stop], mask[start]):
            stop += 1
        row = np.concatenate([[False], mask[start], [False]])
        edges = np.flatnonzero(row[1:] != row[:-1])
        for c0, c1 in zip(edges[0::2], edges[1::2]):
            rects.append(Rect(start, stop, int(c0), int(c1)))
        start = stop
    return rects


@dataclass(frozen=True)
class PlacementPlan:
    """Per-map touched/patch-only/mixed rectangles for one piece position."""

    touched: tuple  # Rect per map
    patch_only: tuple  # Rect per map (EMPTY when none)
    mixed: tuple  # list of Rect per map
    windows: tuple  # per layer: padded-coordinate Rect of its input map to gather


def _window(layer: Layer, out: Rect) -> Rect:
    # padded coordinates of the input block that produces output block `out`
    s, k = layer.stride, 2 * layer.radius + 1
    return Rect(out.r0 * s, (out.r1 - 1) * s + k, out.c0 * s, (out.c1 - 1) * s + k)


def plan_placement(net: Network, grid: SliceGrid, index: int, edge: int = LIBRARY_EDGE) -> PlacementPlan:
    grid = SliceGrid(grid)
    x, y = grid.piece_origin(index)
    e = grid.piece_edge
    sizes = net.map_sizes(edge)
    touched = [Rect(y, y + e, x, x + e)]
    pure = [touched[0]]
    for layer, n in zip(net.layers, sizes):
        t, p = touched[-1], pure[-1]
        touched.append(_rect(_touched(layer, n, t.r0, t.r1), _touched(layer, n, t.c0, t.c1)))
        pure.append(EMPTY if p.empty else _rect(_pure(layer, n, p.r0, p.r1), _pure(layer, n, p.c0, p.c1)))
    mixed = [_minus(t, p) for t, p in zip(touched, pure)]
    windows = [_window(layer, touched[i + 1]) for i, layer in enumerate(net.layers)]
    return PlacementPlan(tuple(touched), tuple(pure), tuple(mixed), tuple(windows))


class CompositeEncoder:
    """Distances between stored encodings and replace-one composite encodings."""

    def __init__(self, net: Network, grid: SliceGrid | str):
        self.net = net
        self.grid = SliceGrid(grid)
        self.plans = [plan_placement(net, self.grid, i) for i in range(self.grid.piece_count)]
        self.trace_rects = self._trace_regions()

    def _trace_regions(self) -> list:
        """Rectangles of each candidate map that composite evaluation reads.

        A map's cells are needed when some placement gathers them around its
        touched region, or when a needed cell of the next map depends on them.
        """
        layers = self.net.layers
        sizes = self.net.map_sizes(LIBRARY_EDGE)
        rects = [None] * len(sizes)
        rects[-1] = []
        for l in range(len(layers) - 1, -1, -1):
            n, r = sizes[l], layers[l].radius
            mask = np.zeros((n, n), dtype=bool)
            for plan in self.plans:
                win, t = plan.windows[l], plan.touched[l]
                gathered = np.zeros((n, n), dtype=bool)
                gathered[max(0, win.r0 - r) : win.r1 - r, max(0, win.c0 - r) : win.c1 - r] = True
                gathered[t.rows(), t.cols()] = False
                mask |= gathered
            for rect in rects[l + 1]:
                dep = _window(layers[l], rect)
                mask[max(0, dep.r0 - r) : dep.r1 - r, max(0, dep.c0 - r) : dep.c1 - r] = True
            rects[l] = _mask_rects(mask)
        return rects

    def trace(self, images: np.ndarray) -> list:
        """Candidate activation maps, evaluated only where composites read them.

        Returns padded maps like ``Network.trace_batch``; entries whose cells
        are never read are None.
        """
        x = np.asarray(images, dtype=np.float32)
        layers = self.net.layers
        sizes = self.net.map_sizes(x.shape[1])
        maps = [self.net._pad(x, layers[0])]
        for l, layer in enumerate(layers[:-1]):
            rects = self.trace_rects[l + 1]
            if not rects:
                maps.append(None)
                continue
            consumer = layers[l + 1]
            p, n = consumer.radius, sizes[l + 1]
            out = np.full((x.shape[0], n + 2 * p, n + 2 * p, self.net.channels[l + 1]), consumer.pad_value, np.float32)
            for rect in rects:
                win = _window(layer, rect)
                block = maps[l][:, win.r0 : win.r1, win.c0 : win.c1]
                out[:, rect.rows(-p), rect.cols(-p)] = layer.apply(block, *rect.shape)
            maps.append(out)
        return maps

    def patch_cache(self, patch_tensor: np.ndarray, placement: int) -> list:
        """Patch-only cell values of every map for one placement.

        ``patch_tensor`` is the normalized (edge, edge, 3) patch.
        """
        plan = self.plans[placement]
        values = [patch_tensor[None]]
        for l, layer in enumerate(self.net.layers):
            out = plan.patch_only[l + 1]
            if out.empty:
                values.extend([None] * (len(self.net.layers) - l))
                break
            win = _window(layer, out)
            src = plan.patch_only[l]
            r = layer.radius
            buf = np.full((1, win.r1 - win.r0, win.c1 - win.c0, values[-1].shape[3]), layer.pad_value, np.float32)
            # in-bounds window positions all lie inside the source patch-only rect
            r0, r1 = max(src.r0, win.r0 - r), min(src.r1, win.r1 - r)
            c0, c1 = max(src.c0, win.c0 - r), min(src.c1, win.c1 - r)
            buf[:, r0 - win.r0 + r : r1 - win.r0 + r, c0 - win.c0 + r : c1 - win.c0 + r] = values[-1][
                :, r0 - src.r0 : r1 - src.r0, c0 - src.c0 : c1 - src.c0
            ]
            values.append(layer.apply(buf, *out.shape))
        return values

    def composite_distances(self, traces: list, stored: np.ndarray, patch_values: list, placement: int) -> np.ndarray:
        """Frobenius distances for a batch of candidates at one placement.

        ``traces`` are the candidates' padded activation maps from
        ``Network.trace_batch`` (only the maps feeding each layer are read);
        ``stored`` is the (B, 32, 32, 10) batch of indexed encodings.
        """
        plan = self.plans[placement]
        layers = self.net.layers
        batch = traces[0].shape[0]
        current = np.broadcast_to(patch_values[0], (batch,) + patch_values[0].shape[1:])
        for l, layer in enumerate(layers):
            r = layer.radius
            win = plan.windows[l]
            here = plan.touched[l]
            if traces[l] is None:
                # the gathered window is exactly the touched region
                buf = current
            else:
                buf = traces[l][:, win.r0 : win.r1, win.c0 : win.c1].copy()
                buf[:, here.rows(win.r0 - r), here.cols(win.c0 - r)] = current
            nxt = plan.touched[l + 1]
            out = np.empty((batch,) + nxt.shape + (self.net.channels[l + 1],), np.float32)
            pure = plan.patch_only[l + 1]
            if not pure.empty:
                out[:, pure.rows(nxt.r0), pure.cols(nxt.c0)] = patch_values[l + 1]
            for m in plan.mixed[l + 1]:
                w = _window(layer, m)
                block = buf[:, w.r0 - win.r0 : w.r1 - win.r0, w.c0 - win.c0 : w.c1 - win.c0]
                out[:, m.rows(nxt.r0), m.cols(nxt.c0)] = layer.apply(block, *m.shape)
            current = out
        final = plan.touched[-1]
        ref = stored[:, final.rows(), final.cols()]
        diff = current.astype(np.float64) - ref.astype(np.float64)
        return np.sqrt(np.einsum("bhwc,bhwc->b", diff, diff))
