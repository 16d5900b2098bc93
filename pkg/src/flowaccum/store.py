"""On-disk formats: tile manifests, raw tiles, compressed cache spills, ASCII grids.

* Manifest: JSON with ``version``, ``kind`` (``"flowdir"``, ``"weights"``
  or ``"accumulation"``), DEM and tile dimensions, and ``tiles``, a
  ``grid_rows x grid_cols`` array of paths relative to the manifest (``null``
  for absent tiles).  A flow-direction manifest may carry a ``weights`` array
  of the same shape.
* Flow-direction tile: ``W*H`` bytes, row-major.
* Accumulation and weight tiles: ``W*H`` little-endian float64, NoData as NaN.
* Cache spill: ``uint32 W, uint32 H`` then the DEFLATE-compressed float64 tile.

All readers and writers take an optional :class:`IOCounters` and add the
number of cells they touched.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import CacheError, FormatError, ValidationError
from .raster import NODATA, NOFLOW, TileLayout, validate_flowdirs

MANIFEST_VERSION = 1
_SPILL_HEADER = struct.Struct("<II")


@dataclass
class IOCounters:
    flowdir_cells_read: int = 0
    weight_cells_read: int = 0
    accum_cells_written: int = 0
    cache_cells_written: int = 0
    cache_cells_read: int = 0

    def add(self, other: "IOCounters") -> "IOCounters":
        for k, v in asdict(other).items():
            setattr(self, k, getattr(self, k) + v)
        return self

    def as_dict(self) -> dict:
        return asdict(self)


def _count(counters, name, n):
    if counters is not None:
        setattr(counters, name, getattr(counters, name) + n)


# --------------------------------------------------------------------------
# Manifests
# --------------------------------------------------------------------------


def read_manifest(path, kind: str = "flowdir") -> TileLayout:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: manifest must be a JSON object")
    if doc.get("version") != MANIFEST_VERSION:
        raise FormatError(f"{path}: unsupported manifest version {doc.get('version')!r}")
    if doc.get("kind", "flowdir") != kind:
        raise FormatError(f"{path}: expected a {kind} manifest, found {doc.get('kind')!r}")
    try:
        dims = {k: doc[k] for k in ("dem_width", "dem_height", "tile_width", "tile_height")}
        tiles = doc["tiles"]
    except KeyError as exc:
        raise FormatError(f"{path}: manifest lacks {exc.args[0]!r}") from None
    base = path.parent

    def resolve(grid):
        if not isinstance(grid, list) or not all(isinstance(row, list) for row in grid):
            raise FormatError(f"{path}: tile grid must be a list of lists")
        return [[None if p is None else str(base / p) for p in row] for row in grid]

    weights = doc.get("weights")
    layout = TileLayout(
        **dims, tiles=resolve(tiles), weights=None if weights is None else resolve(weights)
    )
    cell_bytes = 1 if kind == "flowdir" else 8
    _check_sizes(layout.tiles, layout.tile_cells * cell_bytes)
    if layout.weights is not None:
        _check_sizes(layout.weights, layout.tile_cells * 8)
    return layout


def _check_sizes(grid, expected):
    for row in grid:
        for p in row:
            if p is not None and os.path.exists(p) and os.path.getsize(p) != expected:
                raise FormatError(f"{p}: {os.path.getsize(p)} bytes, expected {expected}")


def write_manifest(path, layout: TileLayout, kind: str = "flowdir") -> Path:
    path = Path(path)
    base = path.parent.resolve()

    def rel(grid):
        return [[None if p is None else os.path.relpath(Path(p).resolve(), base) for p in row] for row in grid]

    doc = {
        "version": MANIFEST_VERSION,
        "kind": kind,
        "dem_width": layout.dem_width,
        "dem_height": layout.dem_height,
        "tile_width": layout.tile_width,
        "tile_height": layout.tile_height,
        "tiles": rel(layout.tiles),
    }
    if layout.weights is not None:
        doc["weights"] = rel(layout.weights)
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


# --------------------------------------------------------------------------
# Tiles
# --------------------------------------------------------------------------


def read_flowdir_tile(path, width: int, height: int, counters: IOCounters | None = None) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) != width * height:
        raise FormatError(f"{path}: {len(raw)} bytes, expected {width * height} for a {width}x{height} tile")
    F = np.frombuffer(raw, dtype=np.uint8).reshape(height, width)
    try:
        F = validate_flowdirs(F)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    _count(counters, "flowdir_cells_read", F.size)
    return F


def write_flowdir_tile(path, F: np.ndarray) -> None:
    validate_flowdirs(F).tofile(path)


def _read_f64(path, width, height):
    raw = Path(path).read_bytes()
    if len(raw) != 8 * width * height:
        raise FormatError(f"{path}: {len(raw)} bytes, expected {8 * width * height}")
    return np.frombuffer(raw, dtype="<f8").reshape(height, width).astype(np.float64)


def read_weight_tile(path, width: int, height: int, counters: IOCounters | None = None) -> np.ndarray:
    w = _read_f64(path, width, height)
    _count(counters, "weight_cells_read", w.size)
    return w


def write_weight_tile(path, w: np.ndarray) -> None:
    np.ascontiguousarray(w, dtype="<f8").tofile(path)


def read_accum_tile(path, width: int, height: int) -> np.ndarray:
    return _read_f64(path, width, height)


def write_accum_tile(path, A: np.ndarray, counters: IOCounters | None = None) -> None:
    np.ascontiguousarray(A, dtype="<f8").tofile(path)
    _count(counters, "accum_cells_written", A.size)


# --------------------------------------------------------------------------
# Cache spills
# --------------------------------------------------------------------------


class TileCache:
    """Compressed on-disk store for stage-1 accumulations, keyed by tile."""

    def __init__(self, cache_dir, counters: IOCounters | None = None, level: int = 1):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.counters = counters
        self.level = level

    def path(self, tile) -> Path:
        return self.cache_dir / f"accum_r{tile[0]}_c{tile[1]}.z"

    def spill(self, tile, A: np.ndarray) -> int:
        """Write ``A`` for ``tile``; returns the compressed size in bytes."""
        H, W = A.shape
        blob = _SPILL_HEADER.pack(W, H) + zlib.compress(np.ascontiguousarray(A, dtype="<f8").tobytes(), self.level)
        self.path(tile).write_bytes(blob)
        _count(self.counters, "cache_cells_written", A.size)
        return len(blob)

    def load(self, tile) -> np.ndarray:
        p = self.path(tile)
        try:
            blob = p.read_bytes()
        except FileNotFoundError:
            raise CacheError(f"no cache spill for tile {tile} at {p}") from None
        if len(blob) < _SPILL_HEADER.size:
            raise CacheError(f"{p}: truncated spill")
        W, H = _SPILL_HEADER.unpack_from(blob)
        try:
            raw = zlib.decompress(blob[_SPILL_HEADER.size :])
        except zlib.error as exc:
            raise CacheError(f"{p}: corrupt spill ({exc})") from None
        if len(raw) != 8 * W * H:
            raise CacheError(f"{p}: spill holds {len(raw)} bytes, header says {W}x{H}")
        _count(self.counters, "cache_cells_read", W * H)
        return np.frombuffer(raw, dtype="<f8").reshape(H, W).astype(np.float64)

    def discard(self, tile) -> None:
        self.path(tile).unlink(missing_ok=True)


# --------------------------------------------------------------------------
# ASCII debug grids
# --------------------------------------------------------------------------

_TO_TOKEN = {NODATA: ".", NOFLOW: "o", **{d: str(d) for d in range(1, 9)}}
_FROM_TOKEN = {v: k for k, v in _TO_TOKEN.items()}


def read_ascii_grid(text: str) -> np.ndarray:
    """Parse ``.``/``o``/``1``-``8`` tokens, one row per line."""
    rows = [line.split() for line in text.strip().splitlines() if line.strip()]
    if not rows:
        raise FormatError("empty ASCII grid")
    if len({len(r) for r in rows}) != 1:
        raise FormatError("ASCII grid rows differ in length")
    try:
        return np.array([[_FROM_TOKEN[t] for t in r] for r in rows], dtype=np.uint8)
    except KeyError as exc:
        raise FormatError(f"unknown ASCII grid token {exc.args[0]!r}") from None


def write_ascii_grid(F: np.ndarray) -> str:
    F = validate_flowdirs(F)
    return "\n".join(" ".join(_TO_TOKEN[int(v)] for v in row) for row in F) + "\n"
