"""Serial flow accumulation on a single tile and perimeter link extraction.

The per-cell loops are numba kernels; every public function validates its
inputs and converts kernel status codes into exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import CyclicFlowError, ValidationError
from .messages import PerimeterPayload
from .raster import (
    ACCUM_DTYPE,
    DX,
    DY,
    FLOW_EXTERNAL,
    FLOW_TERMINATES,
    NODATA,
    NOFLOW,
    perimeter_cells,
    perimeter_count,
    perimeter_to_xy,
    validate_flowdirs,
    xy_to_perimeter,
)


@njit(cache=True, nogil=True)
def _accumulate(F, w, DX, DY):
    H, W = F.shape
    A = np.zeros((H, W), dtype=np.float64)
    D = np.zeros((H, W), dtype=np.uint8)
    valid = 0
    for y in range(H):
        for x in range(W):
            f = F[y, x]
            if f == 255:
                A[y, x] = np.nan
                continue
            valid += 1
            if f == 0:
                continue
            tx = x + DX[f]
            ty = y + DY[f]
            if tx < 0 or tx >= W or ty < 0 or ty >= H:
                continue
            if F[ty, tx] == 255:
                continue
            D[ty, tx] += 1

    queue = np.empty(H * W, dtype=np.int64)
    tail = 0
    for y in range(H):
        for x in range(W):
            if D[y, x] == 0 and F[y, x] != 255:
                queue[tail] = y * W + x
                tail += 1

    head = 0
    dropped = 0.0
    while head < tail:
        c = queue[head]
        head += 1
        y = c // W
        x = c - y * W
        A[y, x] += w[y, x]
        f = F[y, x]
        if f == 0:
            continue
        tx = x + DX[f]
        ty = y + DY[f]
        if tx < 0 or tx >= W or ty < 0 or ty >= H:
            continue
        if F[ty, tx] == 255:
            dropped += A[y, x]
            continue
        A[ty, tx] += A[y, x]
        D[ty, tx] -= 1
        if D[ty, tx] == 0:
            queue[tail] = ty * W + tx
            tail += 1
    return A, head, valid, dropped


@njit(cache=True, nogil=True)
def _perimeter_ordinal(x, y, W, H):
    if W == 1 or H == 1:
        return y * W + x
    if y == 0:
        return x
    if x == W - 1:
        return W - 1 + y
    if y == H - 1:
        return W + H - 2 + (W - 1 - x)
    return 2 * W + H - 3 + (H - 1 - y)


@njit(cache=True, nogil=True)
def _perimeter_links(F, xs, ys, DX, DY):
    # end[c]: -2 unknown, -1 path terminates, otherwise flat index of the exit cell
    H, W = F.shape
    n = H * W
    end = np.full(n, -2, dtype=np.int64)
    walk = np.empty(n + 1, dtype=np.int64)
    P = xs.shape[0]
    L = np.empty(P, dtype=np.uint16)
    for p in range(P):
        x = xs[p]
        y = ys[p]
        c0 = y * W + x
        depth = 0
        result = -2
        while True:
            c = y * W + x
            if end[c] != -2:
                result = end[c]
                break
            walk[depth] = c
            depth += 1
            if depth > n:
                return L, p
            f = F[y, x]
            if f == 255 or f == 0:
                result = -1
                break
            tx = x + DX[f]
            ty = y + DY[f]
            if tx < 0 or tx >= W or ty < 0 or ty >= H:
                result = c
                break
            x = tx
            y = ty
        for i in range(depth):
            end[walk[i]] = result
        if result == -1:
            L[p] = 65535
        elif result == c0:
            L[p] = 65534
        else:
            ey = result // W
            L[p] = _perimeter_ordinal(result - ey * W, ey, W, H)
    return L, -1


@dataclass
class TileSolution:
    """Stage-1 result for one tile.

    ``A`` holds in-tile accumulations (NaN at NoData).  ``perim_F``,
    ``perim_A`` and ``perim_L`` are indexed by perimeter ordinal.
    ``dropped`` is the flow that was directed into in-tile NoData cells.
    """

    A: np.ndarray
    perim_F: np.ndarray
    perim_A: np.ndarray
    perim_L: np.ndarray
    dropped: float = 0.0
    processed: int = 0

    @property
    def perimeter(self) -> int:
        return self.perim_L.shape[0]


def accumulate_tile(F: np.ndarray, w: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Queue-based in-tile accumulation; returns ``(A, dropped)``.

    Flow leaving the tile or entering a NoData cell is not carried further.
    Raises :class:`CyclicFlowError` when some cells are never released.
    """
    F = validate_flowdirs(F)
    w = _weights_for(F, w)
    A, processed, valid, dropped = _accumulate(F, w, DX, DY)
    if processed != valid:
        raise CyclicFlowError(f"{valid - processed} of {valid} cells lie on or downstream of a flow cycle")
    return A, float(dropped)


def perimeter_links(F: np.ndarray) -> np.ndarray:
    """Link of every perimeter cell, as a ``uint16`` array in perimeter order."""
    F = validate_flowdirs(F)
    H, W = F.shape
    xs, ys = perimeter_cells(W, H)
    L, bad = _perimeter_links(F, xs, ys, DX, DY)
    if bad >= 0:
        raise CyclicFlowError(f"flow path from perimeter cell {bad} does not terminate")
    return L


def solve_tile(F: np.ndarray, w: np.ndarray | None = None) -> TileSolution:
    F = validate_flowdirs(F)
    w = _weights_for(F, w)
    A, processed, valid, dropped = _accumulate(F, w, DX, DY)
    if processed != valid:
        raise CyclicFlowError(f"{valid - processed} of {valid} cells lie on or downstream of a flow cycle")
    H, W = F.shape
    xs, ys = perimeter_cells(W, H)
    L, bad = _perimeter_links(F, xs, ys, DX, DY)
    if bad >= 0:
        raise CyclicFlowError(f"flow path from perimeter cell {bad} does not terminate")
    return TileSolution(
        A=A,
        perim_F=F[ys, xs].copy(),
        perim_A=A[ys, xs].copy(),
        perim_L=L,
        dropped=float(dropped),
        processed=int(processed),
    )


def follow_path(F: np.ndarray, p: int) -> int:
    """Link of the single perimeter cell with ordinal ``p``.

    A plain walk down the flow path; :func:`perimeter_links` computes the
    same thing for every perimeter cell at once.
    """
    F = np.asarray(F)
    H, W = F.shape
    x0, y0 = perimeter_to_xy(p, W, H)
    x, y = x0, y0
    for _ in range(W * H + 1):
        f = int(F[y, x])
        if f == NODATA or f == NOFLOW:
            return FLOW_TERMINATES
        tx, ty = x + int(DX[f]), y + int(DY[f])
        if not (0 <= tx < W and 0 <= ty < H):
            if (x, y) == (x0, y0):
                return FLOW_EXTERNAL
            return xy_to_perimeter(x, y, W, H)
        x, y = tx, ty
    raise CyclicFlowError(f"flow path from perimeter cell {p} does not terminate")


def extract_payload(sol: TileSolution):
    """Pack the perimeter arrays of ``sol`` into a stage-1 message payload."""
    return PerimeterPayload(F=sol.perim_F, A=sol.perim_A, L=sol.perim_L)


def tile_mass_balance(F: np.ndarray, A: np.ndarray, dropped: float) -> dict:
    """Split in-tile flow into what leaves the tile, what is retained, and what is dropped."""
    F = np.asarray(F)
    H, W = F.shape
    ys, xs = np.mgrid[0:H, 0:W]
    valid = F != NODATA
    directed = valid & (F != NOFLOW)
    tx = xs + DX[F]
    ty = ys + DY[F]
    leaving = directed & ((tx < 0) | (tx >= W) | (ty < 0) | (ty >= H))
    return {
        "exited": float(A[leaving].sum()),
        "retained": float(A[valid & (F == NOFLOW)].sum()),
        "dropped": float(dropped),
        "cells": int(valid.sum()),
    }


def _weights_for(F, w):
    if w is None:
        return np.ones(F.shape, dtype=ACCUM_DTYPE)
    w = np.asarray(w, dtype=ACCUM_DTYPE)
    if w.shape != F.shape:
        raise ValidationError(f"weight grid shape {w.shape} does not match flow directions {F.shape}")
    if (w[F != NODATA] < 0).any():
        raise ValidationError("weights must be non-negative")
    return w


__all__ = [
    "TileSolution",
    "accumulate_tile",
    "extract_payload",
    "follow_path",
    "perimeter_count",
    "perimeter_links",
    "solve_tile",
    "tile_mass_balance",
]
