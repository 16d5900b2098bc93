"""
Stitching tiles together with the perimeter graph
=================================================

Three 7x7 tiles of a 14x14 DEM (the fourth tile is absent).  One exit cell
in the top-left tile gets no flow from its own tile but collects 99 units
from the other two tiles.  The producer works this out from perimeter data
alone and sends that tile an offset of 99 for that cell.
"""

import numpy as np

from flowaccum.finalize import apply_offsets
from flowaccum.global_graph import AllocationTracker, build_graph, solve_global
from flowaccum.raster import NODATA, NOFLOW, TileLayout, xy_to_perimeter
from flowaccum.tile import extract_payload, solve_tile
from flowaccum.verify import brute_oracle

F = np.full((14, 14), NOFLOW, dtype=np.uint8)
F[0:7, 7:14] = NODATA   # the absent tile
F[7:14, :] = 7          # bottom tiles drain west ...
F[7:14, 0] = 1          # ... then north along the left edge
F[6, 0] = 7             # the exit cell points off the DEM
F[6, 3] = 5             # one more cell of the top-left tile drains south

layout = TileLayout(14, 14, 7, 7, [["t00", None], ["t10", "t11"]])
blocks = {(r, c): F[7 * r : 7 * r + 7, 7 * c : 7 * c + 7] for r, c in layout.present_tiles()}
solutions = {t: solve_tile(b) for t, b in blocks.items()}

tracker = AllocationTracker()
graph = build_graph(layout, {t: extract_payload(s) for t, s in solutions.items()}, tracker)
offsets = solve_global(graph, tracker)
print(f"graph: {graph.node_count} nodes, {len(graph.external_edges())} cross-tile edges")
print("largest producer array:", tracker.peak_elements, "elements")

p = xy_to_perimeter(0, 6, 7, 7)
print("offset for the exit cell:", offsets[(0, 0)].offsets[p])

final = apply_offsets(blocks[(0, 0)], solutions[(0, 0)].A, offsets[(0, 0)])
print("finalized exit cell:", final[6, 0], " whole-grid oracle:", brute_oracle(F)[6, 0])
