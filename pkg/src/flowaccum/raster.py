"""Flow-direction encoding, tile layout and perimeter arithmetic.

Grids are plain numpy arrays of shape ``(height, width)`` in row-major
order, so ``grid[y, x]`` addresses column ``x`` of row ``y`` and y grows
downward.  Flow directions are stored as ``uint8``:

====  =========  ==========
code  name       (dx, dy)
====  =========  ==========
0     NoFlow     --
1     N          (0, -1)
2     NE         (+1, -1)
3     E          (+1, 0)
4     SE         (+1, +1)
5     S          (0, +1)
6     SW         (-1, +1)
7     W          (-1, 0)
8     NW         (-1, -1)
255   NoData     --
====  =========  ==========
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

from .errors import FormatError, ValidationError

NOFLOW = 0
NODATA = 255
N, NE, E, SE, S, SW, W, NW = range(1, 9)

# Reserved link values; legal perimeter indices are dense from 0.
FLOW_EXTERNAL = 65534
FLOW_TERMINATES = 65535
MAX_PERIMETER = 65533

# Indexed by direction code; entries 0 and 9..255 are unused.
DX = np.zeros(256, dtype=np.int64)
DY = np.zeros(256, dtype=np.int64)
DX[1:9] = [0, 1, 1, 1, 0, -1, -1, -1]
DY[1:9] = [-1, -1, 0, 1, 1, 1, 0, -1]

_LEGAL = np.zeros(256, dtype=bool)
_LEGAL[0:9] = True
_LEGAL[NODATA] = True

FLOWDIR_DTYPE = np.uint8
ACCUM_DTYPE = np.float64


def is_legal(code: int) -> bool:
    return 0 <= code <= 255 and bool(_LEGAL[code])


def dir_offset(d: int) -> Optional[tuple[int, int]]:
    """Return the ``(dx, dy)`` step of direction code ``d``.

    NoFlow and NoData have no target and give ``None``.
    """
    if not isinstance(d, (int, np.integer)) or not is_legal(int(d)):
        raise ValidationError(f"illegal flow direction {d!r}")
    d = int(d)
    if d == NOFLOW or d == NODATA:
        return None
    return int(DX[d]), int(DY[d])


def offset_to_dir(dx: int, dy: int) -> int:
    for d in range(1, 9):
        if DX[d] == dx and DY[d] == dy:
            return d
    raise ValidationError(f"({dx}, {dy}) is not an 8-neighbourhood step")


def validate_flowdirs(F: np.ndarray) -> np.ndarray:
    """Check that ``F`` is a non-empty 2-D grid of legal direction codes."""
    F = np.asarray(F)
    if F.ndim != 2 or F.shape[0] < 1 or F.shape[1] < 1:
        raise ValidationError(f"flow-direction grid must be 2-D and non-empty, got shape {F.shape}")
    if F.dtype != FLOWDIR_DTYPE:
        if not np.issubdtype(F.dtype, np.integer) or F.min() < 0 or F.max() > 255:
            raise ValidationError("flow directions must be byte values")
        F = F.astype(FLOWDIR_DTYPE)
    bad = ~_LEGAL[F]
    if bad.any():
        y, x = np.argwhere(bad)[0]
        raise ValidationError(f"illegal flow direction {int(F[y, x])} at (x={x}, y={y})")
    return F


# --------------------------------------------------------------------------
# Perimeter indexing
# --------------------------------------------------------------------------


def perimeter_count(width: int, height: int) -> int:
    if width < 1 or height < 1:
        raise ValueError(f"tile dimensions must be positive, got {width}x{height}")
    if width == 1 or height == 1:
        return width * height
    return 2 * width + 2 * height - 4


def perimeter_to_xy(p: int, width: int, height: int) -> tuple[int, int]:
    """Map perimeter ordinal ``p`` to its ``(x, y)`` cell.

    The walk is clockwise from the top-left corner: the top row left to
    right, the right column downward, the bottom row right to left, then
    the left column upward.  Single-row or single-column tiles are walked
    in row-major order.
    """
    P = perimeter_count(width, height)
    if not 0 <= p < P:
        raise IndexError(f"perimeter index {p} out of range for {width}x{height} (P={P})")
    if width == 1 or height == 1:
        return p % width, p // width
    if p < width:
        return p, 0
    p -= width
    if p < height - 1:
        return width - 1, p + 1
    p -= height - 1
    if p < width - 1:
        return width - 2 - p, height - 1
    p -= width - 1
    return 0, height - 2 - p


def xy_to_perimeter(x: int, y: int, width: int, height: int) -> int:
    if not (0 <= x < width and 0 <= y < height):
        raise IndexError(f"({x}, {y}) lies outside a {width}x{height} tile")
    if width == 1 or height == 1:
        return y * width + x
    if y == 0:
        return x
    if x == width - 1:
        return width - 1 + y
    if y == height - 1:
        return width + height - 2 + (width - 1 - x)
    if x == 0:
        return 2 * width + height - 3 + (height - 1 - y)
    raise ValueError(f"({x}, {y}) is an interior cell of a {width}x{height} tile")


@lru_cache(maxsize=64)
def perimeter_cells(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Read-only arrays ``(xs, ys)`` of every perimeter cell, in perimeter order."""
    P = perimeter_count(width, height)
    p = np.arange(P, dtype=np.int64)
    if width == 1 or height == 1:
        xs, ys = p % width, p // width
    else:
        xs = np.empty(P, dtype=np.int64)
        ys = np.empty(P, dtype=np.int64)
        top = p < width
        right = (p >= width) & (p < width + height - 1)
        bottom = (p >= width + height - 1) & (p < 2 * width + height - 2)
        left = p >= 2 * width + height - 2
        xs[top], ys[top] = p[top], 0
        xs[right], ys[right] = width - 1, p[right] - width + 1
        xs[bottom], ys[bottom] = width - 2 - (p[bottom] - width - height + 1), height - 1
        xs[left], ys[left] = 0, height - 2 - (p[left] - 2 * width - height + 2)
    xs.setflags(write=False)
    ys.setflags(write=False)
    return xs, ys


def xy_to_perimeter_many(xs: np.ndarray, ys: np.ndarray, width: int, height: int) -> np.ndarray:
    """Vectorised :func:`xy_to_perimeter`; every input cell must be on the boundary."""
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    if width == 1 or height == 1:
        return ys * width + xs
    out = np.select(
        [ys == 0, xs == width - 1, ys == height - 1, xs == 0],
        [xs, width - 1 + ys, width + height - 2 + (width - 1 - xs), 2 * width + height - 3 + (height - 1 - ys)],
        default=-1,
    )
    if (out < 0).any():
        raise ValueError("interior cell passed to xy_to_perimeter_many")
    return out


# --------------------------------------------------------------------------
# Tile layout
# --------------------------------------------------------------------------


class InTile(NamedTuple):
    tile: tuple[int, int]
    cell: tuple[int, int]


class _OutsideDEM:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "OUTSIDE_DEM"


OUTSIDE_DEM = _OutsideDEM()


@dataclass(frozen=True)
class TileLayout:
    """Geometry of a tiled DEM.

    ``tiles[row][col]`` is the path of the flow-direction tile, or ``None``
    for an absent tile (treated as all NoData).  Every stored tile is
    ``tile_width x tile_height``; tiles on the right/bottom edges are padded
    with NoData beyond ``dem_width``/``dem_height``.
    """

    dem_width: int
    dem_height: int
    tile_width: int
    tile_height: int
    tiles: tuple = field(repr=False)
    weights: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("dem_width", "dem_height", "tile_width", "tile_height"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise FormatError(f"{name} must be a positive integer, got {v!r}")
        if perimeter_count(self.tile_width, self.tile_height) > MAX_PERIMETER:
            raise FormatError(
                f"tiles of {self.tile_width}x{self.tile_height} exceed the 16-bit perimeter index range"
            )
        object.__setattr__(self, "tiles", _freeze_grid(self.tiles, self.grid_rows, self.grid_cols, "tiles"))
        if self.weights is not None:
            weights = _freeze_grid(self.weights, self.grid_rows, self.grid_cols, "weights")
            for r in range(self.grid_rows):
                for c in range(self.grid_cols):
                    if (weights[r][c] is None) != (self.tiles[r][c] is None):
                        raise FormatError(f"weights presence differs from tiles at ({r}, {c})")
            object.__setattr__(self, "weights", weights)

    @property
    def grid_cols(self) -> int:
        return -(-self.dem_width // self.tile_width)

    @property
    def grid_rows(self) -> int:
        return -(-self.dem_height // self.tile_height)

    @property
    def perimeter(self) -> int:
        return perimeter_count(self.tile_width, self.tile_height)

    @property
    def tile_cells(self) -> int:
        return self.tile_width * self.tile_height

    def is_present(self, row: int, col: int) -> bool:
        return 0 <= row < self.grid_rows and 0 <= col < self.grid_cols and self.tiles[row][col] is not None

    def present_tiles(self) -> list[tuple[int, int]]:
        """Present tiles in row-major order; list position is the tile id."""
        return [
            (r, c) for r in range(self.grid_rows) for c in range(self.grid_cols) if self.tiles[r][c] is not None
        ]

    def tile_path(self, row: int, col: int):
        return self.tiles[row][col]

    def weight_path(self, row: int, col: int):
        return None if self.weights is None else self.weights[row][col]

    def valid_extent(self, row: int, col: int) -> tuple[int, int]:
        """Width and height of the part of tile ``(row, col)`` inside the DEM."""
        w = min(self.tile_width, self.dem_width - col * self.tile_width)
        h = min(self.tile_height, self.dem_height - row * self.tile_height)
        return w, h


def _freeze_grid(grid, rows, cols, name):
    grid = tuple(tuple(None if v is None else str(v) for v in row) for row in grid)
    if len(grid) != rows or any(len(row) != cols for row in grid):
        shape = (len(grid), len(grid[0]) if grid else 0)
        raise FormatError(f"{name} grid is {shape[0]}x{shape[1]}, layout needs {rows}x{cols}")
    return grid


def global_neighbor(layout: TileLayout, tile: tuple[int, int], cell: tuple[int, int], d: int):
    """Where flow leaving ``cell`` of ``tile`` in direction ``d`` lands.

    Returns :class:`InTile` for a cell of a present tile, otherwise
    :data:`OUTSIDE_DEM` (off the DEM or into an absent tile).
    """
    step = dir_offset(d)
    if step is None:
        raise ValidationError(f"direction {d} has no target")
    row, col = tile
    gx = col * layout.tile_width + cell[0] + step[0]
    gy = row * layout.tile_height + cell[1] + step[1]
    if not (0 <= gx < layout.dem_width and 0 <= gy < layout.dem_height):
        return OUTSIDE_DEM
    trow, tcol = gy // layout.tile_height, gx // layout.tile_width
    if not layout.is_present(trow, tcol):
        return OUTSIDE_DEM
    return InTile((trow, tcol), (gx % layout.tile_width, gy % layout.tile_height))
