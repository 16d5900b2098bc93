"""
Accumulating flow inside one tile
=================================

A tile is a small grid of D8 flow directions.  Solving it gives the
accumulation of every cell plus three facts about each perimeter cell:
its direction, its accumulation, and where its in-tile flow path ends.
Those perimeter facts are all the producer ever sees of the tile.
"""

from flowaccum.raster import FLOW_EXTERNAL, FLOW_TERMINATES, perimeter_cells
from flowaccum.store import read_ascii_grid, write_ascii_grid
from flowaccum.tile import extract_payload, solve_tile

# '.' is NoData, 'o' is NoFlow, 1..8 are N, NE, E, SE, S, SW, W, NW.
F = read_ascii_grid("""
3 3 3 3 3
1 5 . 5 7
3 3 3 o 7
1 . 1 1 5
5 5 1 7 7
""")
print(write_ascii_grid(F))

sol = solve_tile(F)
print("accumulation (NaN is NoData):")
print(sol.A)
print("flow dropped into NoData cells:", sol.dropped)

# Perimeter cells are numbered clockwise from the top-left corner.
xs, ys = perimeter_cells(5, 5)
names = {FLOW_EXTERNAL: "leaves the tile here", FLOW_TERMINATES: "ends inside"}
for p, (x, y) in enumerate(zip(xs, ys)):
    link = int(sol.perim_L[p])
    where = names.get(link, f"exits at perimeter cell {link}")
    print(f"p={p:2d} (x={x}, y={y})  A={sol.perim_A[p]:4g}  {where}")

payload = extract_payload(sol)
print(f"stage-1 payload: {payload.nbytes} bytes for {len(xs)} perimeter cells")
