"""Ground truth: whole-grid oracles, a synthetic DEM generator and a comparator."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import CyclicFlowError
from .raster import DX, DY, NODATA, NOFLOW, TileLayout, validate_flowdirs
from .store import (
    read_accum_tile,
    read_flowdir_tile,
    read_manifest,
    read_weight_tile,
    write_flowdir_tile,
    write_manifest,
    write_weight_tile,
)


def _downstream(F):
    """Flat index of each cell's in-grid, non-NoData receiver, or -1."""
    H, W = F.shape
    ys, xs = np.mgrid[0:H, 0:W]
    directed = (F != NODATA) & (F != NOFLOW)
    tx = xs + DX[F]
    ty = ys + DY[F]
    inb = directed & (tx >= 0) & (tx < W) & (ty >= 0) & (ty < H)
    tgt = np.full(F.shape, -1, dtype=np.int64)
    tgt[inb] = ty[inb] * W + tx[inb]
    ok = tgt >= 0
    ok[ok] = F.ravel()[tgt[ok]] != NODATA
    tgt[~ok] = -1
    return tgt.ravel()


def oracle_solve(F: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """Flow accumulation of an untiled grid.

    Cells are released in topological waves: every cell whose upstream
    cells are all finished passes its total to its receiver in one
    vectorised step.
    """
    F = validate_flowdirs(F)
    valid = (F != NODATA).ravel()
    tgt = _downstream(F)
    n = F.size
    A = np.where(valid, 1.0 if w is None else np.asarray(w, dtype=np.float64).ravel(), np.nan)
    indeg = np.bincount(tgt[tgt >= 0], minlength=n)
    front = np.flatnonzero(valid & (indeg == 0))
    done = 0
    while front.size:
        done += front.size
        send = front[tgt[front] >= 0]
        dest = tgt[send]
        np.add.at(A, dest, A[send])
        np.subtract.at(indeg, dest, 1)
        dest = np.unique(dest)
        front = dest[indeg[dest] == 0]
    if done != valid.sum():
        raise CyclicFlowError(f"{int(valid.sum()) - done} cells lie on or below a flow cycle")
    return A.reshape(F.shape)


def brute_oracle(F: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """Accumulation by memoised evaluation of ``A(p) = w(p) + sum of A over donors of p``.

    Intended for small grids.  Uses an explicit stack, so deep flow paths do
    not hit the interpreter recursion limit; a cell met again while still
    being evaluated means a cycle.
    """
    F = np.asarray(F)
    H, W = F.shape
    weight = np.ones(F.shape) if w is None else np.asarray(w, dtype=np.float64)
    A = np.full(F.shape, np.nan)
    state = np.zeros(F.shape, dtype=np.int8)  # 0 new, 1 open, 2 done

    def donors(x, y):
        out = []
        for d in range(1, 9):
            nx, ny = x - int(DX[d]), y - int(DY[d])
            if 0 <= nx < W and 0 <= ny < H and F[ny, nx] == d:
                out.append((nx, ny))
        return out

    for y0 in range(H):
        for x0 in range(W):
            if F[y0, x0] == NODATA or state[y0, x0] == 2:
                continue
            stack = [(x0, y0)]
            while stack:
                x, y = stack[-1]
                if state[y, x] == 2:
                    stack.pop()
                    continue
                ups = donors(x, y)
                if state[y, x] == 0:
                    state[y, x] = 1
                    pending = [u for u in ups if state[u[1], u[0]] != 2]
                    for u in pending:
                        if state[u[1], u[0]] == 1:
                            raise CyclicFlowError(f"cycle through cell {u}")
                    stack.extend(pending)
                    continue
                A[y, x] = weight[y, x] + sum(A[uy, ux] for ux, uy in ups)
                state[y, x] = 2
                stack.pop()
    return A


def mass_balance(F: np.ndarray, A: np.ndarray, w: np.ndarray | None = None) -> dict:
    """Where the flow of a whole grid ends up: off the grid, at NoFlow cells, or into NoData."""
    F = np.asarray(F)
    H, W = F.shape
    ys, xs = np.mgrid[0:H, 0:W]
    valid = F != NODATA
    directed = valid & (F != NOFLOW)
    tx = xs + DX[F]
    ty = ys + DY[F]
    off_grid = directed & ((tx < 0) | (tx >= W) | (ty < 0) | (ty >= H))
    into_nodata = directed & ~off_grid
    into_nodata[into_nodata] = F[ty[into_nodata], tx[into_nodata]] == NODATA
    total = float(valid.sum()) if w is None else float(np.asarray(w, dtype=np.float64)[valid].sum())
    return {
        "exited": float(A[off_grid].sum()),
        "retained": float(A[valid & (F == NOFLOW)].sum()),
        "dropped": float(A[into_nodata].sum()),
        "source": total,
    }


# --------------------------------------------------------------------------
# Synthetic data
# --------------------------------------------------------------------------

_STEP_LENGTH = np.array([1.0, 1.0, np.sqrt(2), 1.0, np.sqrt(2), 1.0, np.sqrt(2), 1.0, np.sqrt(2)])


def steepest_descent(z: np.ndarray, edge_drop: float | None = None) -> np.ndarray:
    """D8 directions towards the steepest strictly lower neighbour; NoFlow if none.

    Ties go to the lowest direction code.  With ``edge_drop=None`` cells off
    the grid are never receivers; otherwise each off-grid neighbour sits
    ``edge_drop`` below the nearest edge cell, so flow can leave the grid.
    """
    H, W = z.shape
    if edge_drop is None:
        zp = np.pad(z, 1, constant_values=np.inf)
    else:
        zp = np.pad(z, 1, mode="edge")
        zp[0, :] -= edge_drop
        zp[-1, :] -= edge_drop
        zp[1:-1, 0] -= edge_drop
        zp[1:-1, -1] -= edge_drop
    best = np.zeros(z.shape)
    F = np.zeros(z.shape, dtype=np.uint8)
    for d in range(1, 9):
        nb = zp[1 + DY[d] : 1 + DY[d] + H, 1 + DX[d] : 1 + DX[d] + W]
        slope = (z - nb) / _STEP_LENGTH[d]
        better = slope > best
        best[better] = slope[better]
        F[better] = d
    return F


@dataclass
class SyntheticDEM:
    elevation: np.ndarray
    flowdirs: np.ndarray
    tile_width: int
    tile_height: int
    present: np.ndarray
    weights: np.ndarray | None = field(default=None, repr=False)

    @property
    def width(self) -> int:
        return self.flowdirs.shape[1]

    @property
    def height(self) -> int:
        return self.flowdirs.shape[0]

    def tile(self, row: int, col: int, grid: np.ndarray | None = None, fill=NODATA) -> np.ndarray:
        """Padded ``tile_height x tile_width`` block of ``grid`` (default: flow directions)."""
        grid = self.flowdirs if grid is None else grid
        tw, th = self.tile_width, self.tile_height
        block = np.full((th, tw), fill, dtype=grid.dtype)
        part = grid[row * th : (row + 1) * th, col * tw : (col + 1) * tw]
        block[: part.shape[0], : part.shape[1]] = part
        return block

    def write(self, out_dir) -> Path:
        """Write tiles and ``manifest.json`` under ``out_dir``; returns the manifest path."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows, cols = self.present.shape
        tiles = [[None] * cols for _ in range(rows)]
        weights = None if self.weights is None else [[None] * cols for _ in range(rows)]
        for r in range(rows):
            for c in range(cols):
                if not self.present[r, c]:
                    continue
                p = out / f"flowdir_r{r}_c{c}.fd"
                write_flowdir_tile(p, self.tile(r, c))
                tiles[r][c] = str(p)
                if weights is not None:
                    wp = out / f"weight_r{r}_c{c}.f64"
                    write_weight_tile(wp, self.tile(r, c, self.weights, fill=0.0))
                    weights[r][c] = str(wp)
        layout = TileLayout(self.width, self.height, self.tile_width, self.tile_height, tiles, weights)
        return write_manifest(out / "manifest.json", layout)


def generate_synthetic(
    width: int,
    height: int,
    tile_width: int,
    tile_height: int,
    seed: int,
    nodata_fraction: float = 0.0,
    absent_tile_fraction: float = 0.0,
) -> SyntheticDEM:
    """Smooth pseudorandom terrain with D8 directions, NoData blobs and absent tiles.

    The terrain is a random tilt plus Gaussian-smoothed noise, so flow paths
    cross many tiles while local pits still produce NoFlow cells.  Directions
    are taken before masking, so some cells drain into NoData, and the DEM
    edge acts as a slightly lower outlet, so some flow leaves the DEM.
    """
    if min(width, height, tile_width, tile_height) < 1:
        raise ValueError("dimensions must be positive")
    if not (0 <= nodata_fraction < 1 and 0 <= absent_tile_fraction < 1):
        raise ValueError("fractions must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    angle = rng.uniform(0, 2 * np.pi)
    scale = max(2.0, min(width, height) / 24)
    noise = gaussian_filter(rng.standard_normal((height, width)), sigma=scale, mode="reflect")
    noise /= noise.std() or 1.0
    z = 0.05 * (np.cos(angle) * xs + np.sin(angle) * ys) / scale + noise
    F = steepest_descent(z, edge_drop=0.5 / scale)

    if nodata_fraction > 0:
        blobs = gaussian_filter(rng.standard_normal((height, width)), sigma=scale, mode="reflect")
        F[blobs < np.quantile(blobs, nodata_fraction)] = NODATA

    rows, cols = -(-height // tile_height), -(-width // tile_width)
    present = np.ones((rows, cols), dtype=bool)
    n_absent = min(int(round(absent_tile_fraction * rows * cols)), rows * cols - 1)
    if n_absent:
        for k in rng.choice(rows * cols, size=n_absent, replace=False):
            r, c = divmod(int(k), cols)
            present[r, c] = False
            F[r * tile_height : (r + 1) * tile_height, c * tile_width : (c + 1) * tile_width] = NODATA
    return SyntheticDEM(z, F, tile_width, tile_height, present)


# --------------------------------------------------------------------------
# Mosaics and comparison
# --------------------------------------------------------------------------


def mosaic_flowdirs(layout: TileLayout) -> np.ndarray:
    """Merge all flow-direction tiles into one DEM-sized grid (absent tiles NoData)."""
    return _mosaic(layout, lambda p: read_flowdir_tile(p, layout.tile_width, layout.tile_height), NODATA, np.uint8)


def mosaic_weights(layout: TileLayout) -> np.ndarray | None:
    if layout.weights is None:
        return None
    W, H = layout.tile_width, layout.tile_height
    return _mosaic(layout, lambda p: read_weight_tile(p, W, H), 0.0, np.float64, grid=layout.weights)


def mosaic_accum(source) -> np.ndarray:
    """Merge accumulation tiles (given an output manifest or its directory) into one grid."""
    p = Path(source)
    if p.is_dir():
        p = p / "manifest.json"
    layout = read_manifest(p, kind="accumulation")
    return _mosaic(layout, lambda q: read_accum_tile(q, layout.tile_width, layout.tile_height), np.nan, np.float64)


def _mosaic(layout, read, fill, dtype, grid=None):
    grid = layout.tiles if grid is None else grid
    W, H = layout.tile_width, layout.tile_height
    out = np.full((layout.grid_rows * H, layout.grid_cols * W), fill, dtype=dtype)
    for r in range(layout.grid_rows):
        for c in range(layout.grid_cols):
            if grid[r][c] is not None:
                out[r * H : (r + 1) * H, c * W : (c + 1) * W] = read(grid[r][c])
    return out[: layout.dem_height, : layout.dem_width]


@dataclass
class CompareReport:
    shape: tuple
    mismatches: int
    first: list

    @property
    def ok(self) -> bool:
        return self.mismatches == 0

    def as_dict(self) -> dict:
        return {
            "shape": list(self.shape),
            "mismatches": self.mismatches,
            "first": [{"x": x, "y": y, "a": a, "b": b} for x, y, a, b in self.first],
        }


def compare(a: np.ndarray, b: np.ndarray, max_report: int = 10) -> CompareReport:
    """Exact cell-by-cell comparison; NaN equals NaN."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    differ = ~((a == b) | (np.isnan(a) & np.isnan(b)))
    where = np.argwhere(differ)
    first = [(int(x), int(y), float(a[y, x]), float(b[y, x])) for y, x in where[:max_report]]
    return CompareReport(a.shape, int(differ.sum()), first)
