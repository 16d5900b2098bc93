import numpy as np
import pytest

from flowaccum.raster import NODATA, TileLayout
from flowaccum.store import read_ascii_grid, write_flowdir_tile, write_manifest, write_weight_tile


def tile_dataset(directory, F, tile_width, tile_height, absent=(), weights=None):
    """Cut a whole-DEM grid into padded tiles on disk; returns the manifest path."""
    F = np.asarray(F, dtype=np.uint8)
    H, W = F.shape
    rows, cols = -(-H // tile_height), -(-W // tile_width)
    tiles = [[None] * cols for _ in range(rows)]
    wtiles = None if weights is None else [[None] * cols for _ in range(rows)]
    for r in range(rows):
        for c in range(cols):
            if (r, c) in absent:
                continue
            block = np.full((tile_height, tile_width), NODATA, dtype=np.uint8)
            part = F[r * tile_height : (r + 1) * tile_height, c * tile_width : (c + 1) * tile_width]
            block[: part.shape[0], : part.shape[1]] = part
            path = directory / f"t_{r}_{c}.fd"
            write_flowdir_tile(path, block)
            tiles[r][c] = str(path)
            if weights is not None:
                wb = np.zeros((tile_height, tile_width))
                wpart = weights[r * tile_height : (r + 1) * tile_height, c * tile_width : (c + 1) * tile_width]
                wb[: wpart.shape[0], : wpart.shape[1]] = wpart
                wpath = directory / f"w_{r}_{c}.f64"
                write_weight_tile(wpath, wb)
                wtiles[r][c] = str(wpath)
    layout = TileLayout(W, H, tile_width, tile_height, tiles, wtiles)
    return write_manifest(directory / "manifest.json", layout)


def grid(text):
    return read_ascii_grid(text)


def random_acyclic(rng, height, width, nodata=0.1):
    """Random D8 directions derived from random distinct elevations (strict descent)."""
    from flowaccum.verify import steepest_descent

    z = rng.permutation(height * width).reshape(height, width).astype(float)
    F = steepest_descent(z, edge_drop=rng.choice([None, 0.5]))
    F[rng.random((height, width)) < nodata] = NODATA
    return F


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
