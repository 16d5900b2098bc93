"""Hand-built datasets shared by several test modules."""

import numpy as np

from flowaccum.global_graph import build_graph, solve_global
from flowaccum.finalize import apply_offsets
from flowaccum.raster import NODATA, NOFLOW, TileLayout
from flowaccum.tile import extract_payload, solve_tile


def inflow_99_fixture():
    """14x14 DEM in 7x7 tiles with tile (0, 1) absent.

    Every cell of tiles (1, 0) and (1, 1), plus cell (3, 6) of tile (0, 0),
    drains into the bottom-left cell (0, 6) of tile (0, 0), which receives no
    flow from inside its own tile and points west off the DEM.  Its external
    inflow is 49 + 49 + 1 = 99; with its own unit it finalizes to 100.
    """
    F = np.full((14, 14), NOFLOW, dtype=np.uint8)
    F[0:7, 7:14] = NODATA           # absent tile (0, 1)
    F[7:14, :] = 7                  # everything in the bottom row of tiles flows W
    F[7:14, 0] = 1                  # ... then N up the DEM's left column
    F[6, 0] = 7                     # the exit cell: W, off the DEM
    F[6, 3] = 5                     # one cell of tile (0, 0) drains S into tile (1, 0)
    return F, 7, 7, {(0, 1)}, (0, 6)


def in_memory_layout(F, tw, th, absent=()):
    H, W = F.shape
    rows, cols = -(-H // th), -(-W // tw)
    tiles = [[None if (r, c) in absent else "mem" for c in range(cols)] for r in range(rows)]
    return TileLayout(W, H, tw, th, tiles)


def cut(F, r, c, tw, th, fill=NODATA):
    block = np.full((th, tw), fill, dtype=F.dtype)
    part = F[r * th : (r + 1) * th, c * tw : (c + 1) * tw]
    block[: part.shape[0], : part.shape[1]] = part
    return block


def solve_in_memory(F, tw, th, absent=(), w=None):
    """Tiled solve without the orchestrator; returns the mosaicked result and the graph."""
    layout = in_memory_layout(F, tw, th, absent)
    blocks, sols = {}, {}
    for t in layout.present_tiles():
        blocks[t] = cut(F, *t, tw, th)
        sols[t] = solve_tile(blocks[t], None if w is None else cut(w, *t, tw, th, 0.0))
    g = build_graph(layout, {t: extract_payload(s) for t, s in sols.items()})
    offsets = solve_global(g)
    H, W = F.shape
    out = np.full((layout.grid_rows * th, layout.grid_cols * tw), np.nan)
    for (r, c), s in sols.items():
        out[r * th : (r + 1) * th, c * tw : (c + 1) * tw] = apply_offsets(blocks[(r, c)], s.A, offsets[(r, c)])
    return out[:H, :W], g, offsets
