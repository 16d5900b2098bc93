"""Producer-side global flow graph over the perimeter cells of every tile.

There is one node per perimeter cell of every present tile, stored in flat
arrays: node ``bases[t] + p`` is perimeter cell ``p`` of the ``t``-th present
tile.  Each node has at most one out-edge:

* link is a perimeter ordinal ``e``: an internal edge to ``(same tile, e)``;
* link is FlowExternal: an external edge to the neighbouring tile's cell,
  unless that cell is off the DEM, in an absent tile, or NoData;
* link is FlowTerminates: no edge.

Only FlowExternal nodes keep their tile-local accumulation; every other
node starts at zero because its flow is already counted at its exit cell.
Inflow is split by edge kind: ``a_in`` (from other tiles) is what gets
returned to a tile as its offsets, ``a_int`` (from the same tile's upstream
perimeter cells) already reaches the exit cell when the offsets are walked
down the tile's flow paths, so returning it would count it twice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import CyclicFlowError, ProtocolError
from .messages import OffsetPayload, PerimeterPayload
from .raster import (
    DX,
    DY,
    FLOW_EXTERNAL,
    FLOW_TERMINATES,
    NODATA,
    TileLayout,
    perimeter_cells,
    xy_to_perimeter_many,
)


@dataclass
class AllocationTracker:
    """Logical record of the arrays the producer allocates."""

    peak_elements: int = 0
    total_elements: int = 0
    allocations: list = field(default_factory=list)

    def note(self, name, n):
        self.allocations.append((name, int(n)))
        self.total_elements += int(n)
        self.peak_elements = max(self.peak_elements, int(n))

    def array(self, name, shape, dtype, fill=None):
        self.note(name, np.prod(shape))
        if fill is None:
            return np.empty(shape, dtype=dtype)
        return np.full(shape, fill, dtype=dtype)


@dataclass
class GlobalGraph:
    layout: TileLayout
    tiles: list
    bases: np.ndarray
    F: np.ndarray
    A: np.ndarray
    link: np.ndarray
    target: np.ndarray
    internal: np.ndarray
    indegree: np.ndarray
    a_in: np.ndarray | None = None
    a_int: np.ndarray | None = None

    @property
    def node_count(self) -> int:
        return self.F.size

    def node(self, tile: tuple[int, int], p: int) -> int:
        return int(self.bases[self.tiles.index(tile)]) + p

    def external_edges(self):
        """``(source, target)`` node pairs of every edge that crosses a tile boundary."""
        src = np.flatnonzero((self.target >= 0) & ~self.internal)
        return list(zip(src.tolist(), self.target[src].tolist()))


def build_graph(layout: TileLayout, payloads: dict, tracker: AllocationTracker | None = None) -> GlobalGraph:
    """Connect the perimeter payloads of all present tiles into one graph.

    ``payloads`` maps ``(row, col)`` to :class:`PerimeterPayload`.
    """
    tracker = tracker or AllocationTracker()
    tiles = layout.present_tiles()
    missing = set(tiles) - set(payloads)
    extra = set(payloads) - set(tiles)
    if missing or extra:
        raise ProtocolError(f"payloads missing for {sorted(missing)}, unexpected for {sorted(extra)}")
    W, H = layout.tile_width, layout.tile_height
    P = layout.perimeter
    for t in tiles:
        if len(payloads[t]) != P:
            raise ProtocolError(f"tile {t} sent {len(payloads[t])} perimeter cells, layout needs {P}")

    n = P * len(tiles)
    F = tracker.array("F", n, np.uint8)
    A = tracker.array("A", n, np.float64, 0.0)
    link = tracker.array("link", n, np.uint16)
    target = tracker.array("target", n, np.int64, -1)
    internal = tracker.array("internal", n, bool, False)
    bases = np.arange(len(tiles), dtype=np.int64) * P
    # Row-major lookup from tile position to node base; -1 marks absent tiles.
    tile_base = tracker.array("tile_base", (layout.grid_rows, layout.grid_cols), np.int64, -1)
    for i, (r, c) in enumerate(tiles):
        tile_base[r, c] = bases[i]

    xs, ys = perimeter_cells(W, H)
    for i, (r, c) in enumerate(tiles):
        pay = payloads[(r, c)]
        sl = slice(bases[i], bases[i] + P)
        F[sl] = pay.F
        link[sl] = pay.L
        ext = pay.L == FLOW_EXTERNAL
        A[sl][ext] = pay.A[ext]
        inner = pay.L < FLOW_EXTERNAL
        if (pay.L[inner] >= P).any():
            raise ProtocolError(f"tile {(r, c)} sent a link outside its perimeter")
        target[sl][inner] = bases[i] + pay.L[inner].astype(np.int64)
        internal[sl][inner] = True

    for i, (r, c) in enumerate(tiles):
        idx = np.flatnonzero(link[bases[i] : bases[i] + P] == FLOW_EXTERNAL)
        if idx.size == 0:
            continue
        d = F[bases[i] + idx]
        gx = c * W + xs[idx] + DX[d]
        gy = r * H + ys[idx] + DY[d]
        inside = (gx >= 0) & (gx < layout.dem_width) & (gy >= 0) & (gy < layout.dem_height)
        idx, gx, gy = idx[inside], gx[inside], gy[inside]
        tb = tile_base[gy // H, gx // W]
        present = tb >= 0
        idx, gx, gy, tb = idx[present], gx[present], gy[present], tb[present]
        dest = tb + xy_to_perimeter_many(gx % W, gy % H, W, H)
        keep = F[dest] != NODATA
        target[bases[i] + idx[keep]] = dest[keep]

    indegree = np.bincount(target[target >= 0], minlength=n).astype(np.int64)
    tracker.note("indegree", n)
    return GlobalGraph(layout, tiles, bases, F, A, link, target, internal, indegree)


@njit(cache=True, nogil=True)
def _retire(target, internal, A, indegree, a_in, a_int):
    n = target.shape[0]
    deg = indegree.copy()
    queue = np.empty(n, dtype=np.int64)
    tail = 0
    for u in range(n):
        if deg[u] == 0:
            queue[tail] = u
            tail += 1
    head = 0
    while head < tail:
        u = queue[head]
        head += 1
        v = target[u]
        if v < 0:
            continue
        out = A[u] + a_in[u] + a_int[u]
        if internal[u]:
            a_int[v] += out
        else:
            a_in[v] += out
        deg[v] -= 1
        if deg[v] == 0:
            queue[tail] = v
            tail += 1
    return head


def solve_global(g: GlobalGraph, tracker: AllocationTracker | None = None) -> dict:
    """Retire nodes in dependency order and return each tile's offsets.

    Returns ``{(row, col): OffsetPayload}``; the offsets are the external
    inbound flow ``a_in`` of each perimeter cell.
    """
    tracker = tracker or AllocationTracker()
    n = g.node_count
    a_in = tracker.array("a_in", n, np.float64, 0.0)
    a_int = tracker.array("a_int", n, np.float64, 0.0)
    tracker.note("queue", n)
    retired = _retire(g.target, g.internal, g.A, g.indegree, a_in, a_int)
    if retired != n:
        raise CyclicFlowError(f"{n - retired} of {n} perimeter nodes lie on a cross-tile flow cycle")
    g.a_in, g.a_int = a_in, a_int
    P = g.layout.perimeter
    return {t: OffsetPayload(a_in[b : b + P].copy()) for t, b in zip(g.tiles, g.bases.tolist())}


__all__ = [
    "AllocationTracker",
    "FLOW_EXTERNAL",
    "FLOW_TERMINATES",
    "GlobalGraph",
    "PerimeterPayload",
    "build_graph",
    "solve_global",
]
