"""Stage 2 on the consumer: recover the stage-1 intermediate and apply offsets."""

from __future__ import annotations

import enum

import numpy as np
from numba import njit

from .errors import CyclicFlowError, ProtocolError, StateError
from .raster import DX, DY, perimeter_cells
from .tile import accumulate_tile


class Strategy(enum.Enum):
    EVICT = "evict"
    CACHE = "cache"
    RETAIN = "retain"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown strategy {value!r}; choose from evict, cache, retain") from None


@njit(cache=True, nogil=True)
def _walk_offsets(F, A, xs, ys, offsets, DX, DY):
    H, W = F.shape
    n = H * W
    touched = 0
    for p in range(offsets.shape[0]):
        off = offsets[p]
        if not off > 0.0:
            continue
        x = xs[p]
        y = ys[p]
        steps = 0
        while True:
            f = F[y, x]
            if f == 255:
                break
            A[y, x] += off
            steps += 1
            if f == 0:
                break
            tx = x + DX[f]
            ty = y + DY[f]
            if tx < 0 or tx >= W or ty < 0 or ty >= H:
                break
            if steps > n:
                return -1 - p
            x = tx
            y = ty
        touched += steps
    return touched


def apply_offsets(F: np.ndarray, A: np.ndarray, offsets, out: np.ndarray | None = None, stats=None) -> np.ndarray:
    """Add each perimeter offset to its cell and every in-tile cell downstream of it.

    ``offsets`` is an :class:`~flowaccum.messages.OffsetPayload` or a plain
    array in perimeter order.  Works on a copy of ``A`` unless ``out`` is
    given (pass ``out=A`` to update in place).  If ``stats`` is a dict, the
    number of cell updates is added to ``stats["offset_cells_touched"]``.
    """
    off = np.asarray(getattr(offsets, "offsets", offsets), dtype=np.float64)
    H, W = F.shape
    xs, ys = perimeter_cells(W, H)
    if off.shape != xs.shape:
        raise ProtocolError(f"{off.size} offsets for a tile with {xs.size} perimeter cells")
    if out is None:
        out = np.array(A, dtype=np.float64, copy=True)
    elif out is not A:
        out[...] = A
    touched = _walk_offsets(F, out, xs, ys, off, DX, DY)
    if touched < 0:
        raise CyclicFlowError(f"flow path from perimeter cell {-1 - touched} does not terminate")
    if stats is not None:
        stats["offset_cells_touched"] = stats.get("offset_cells_touched", 0) + int(touched)
    return out


def finalize_tile(
    strategy,
    tile,
    load_flowdirs,
    offsets,
    cache=None,
    retained=None,
    load_weights=None,
    stats=None,
) -> np.ndarray:
    """Produce the final accumulation of ``tile``.

    ``load_flowdirs``/``load_weights`` are zero-argument callables that read
    the tile from its source.  EVICT recomputes the intermediate, CACHE loads
    it from ``cache`` (a :class:`~flowaccum.store.TileCache`), RETAIN takes
    ``(F, A)`` from the ``retained`` mapping and updates ``A`` in place.
    """
    strategy = Strategy.parse(strategy)
    if strategy is Strategy.EVICT:
        F = load_flowdirs()
        w = load_weights() if load_weights is not None else None
        A, _ = accumulate_tile(F, w)
        return apply_offsets(F, A, offsets, out=A, stats=stats)
    if strategy is Strategy.CACHE:
        if cache is None:
            raise StateError("CACHE finalization needs a tile cache")
        A = cache.load(tile)
        F = load_flowdirs()
        return apply_offsets(F, A, offsets, out=A, stats=stats)
    if retained is None or tile not in retained:
        raise StateError(f"no retained intermediate for tile {tile}")
    F, A = retained.pop(tile)
    return apply_offsets(F, A, offsets, out=A, stats=stats)
