"""Single-producer / multiple-consumer runtime.

The producer hands tiles to consumers round-robin, collects one perimeter
payload per tile, solves the global graph, and sends each tile's offsets
back to the consumer that solved it.  Producer and consumers share nothing
but their message queues; consumers run as threads or as OS processes.

Consumer inbox messages::

    ("solve", (row, col))
    ("finalize", <encoded OffsetPayload message>)
    ("stop", None)

Producer inbox messages::

    ("perimeter", worker, <encoded PerimeterPayload message>)
    ("done", worker, (row, col), counters, timings)
    ("error", worker, (row, col) or None, exception class name, text)
"""

from __future__ import annotations

import dataclasses
import logging
import multiprocessing
import queue
import random
import threading
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from . import messages
from .errors import CyclicFlowError, FormatError, ProtocolError, WorkerError
from .finalize import Strategy, finalize_tile
from .global_graph import AllocationTracker, build_graph, solve_global
from .raster import NODATA, TileLayout
from .store import (
    IOCounters,
    TileCache,
    read_flowdir_tile,
    read_manifest,
    read_weight_tile,
    write_accum_tile,
    write_manifest,
)
from .tile import extract_payload, solve_tile

log = logging.getLogger(__name__)

STATS_SCHEMA_VERSION = 1
_POLL_SECONDS = 0.5


@dataclass
class JobConfig:
    manifest: object
    output_dir: object
    strategy: Strategy = Strategy.EVICT
    workers: int = 1
    cache_dir: object = None
    weights: object = None
    transport: str = "thread"
    memory_budget: int | None = None
    dispatch_seed: int | None = None

    def __post_init__(self):
        self.strategy = Strategy.parse(self.strategy)
        if int(self.workers) < 1:
            raise ValueError("worker count must be at least 1")
        self.workers = int(self.workers)
        if self.transport not in ("thread", "process"):
            raise ValueError(f"unknown transport {self.transport!r}")

    def load_layout(self) -> TileLayout:
        layout = self.manifest if isinstance(self.manifest, TileLayout) else read_manifest(self.manifest)
        if self.weights is not None:
            wl = read_manifest(self.weights, kind="weights")
            dims = ("dem_width", "dem_height", "tile_width", "tile_height")
            if any(getattr(wl, k) != getattr(layout, k) for k in dims):
                raise FormatError("weights manifest dimensions differ from the flow-direction manifest")
            layout = dataclasses.replace(layout, weights=wl.tiles)
        return layout


def assign_tiles(tile_ids, worker_count: int) -> list[list]:
    """Round-robin: worker ``k`` gets tiles ``k, k + worker_count, ...``."""
    if worker_count < 1:
        raise ValueError("worker count must be at least 1")
    tile_ids = list(tile_ids)
    return [tile_ids[k::worker_count] for k in range(worker_count)]


@dataclass
class TileStats:
    io: IOCounters = field(default_factory=IOCounters)
    stage1_payload_bytes: int = 0
    stage2_payload_bytes: int = 0
    envelope_bytes: int = 0
    solve_seconds: float = 0.0
    finalize_seconds: float = 0.0
    offset_cells_touched: int = 0
    worker: int = -1


@dataclass
class RunReport:
    layout: TileLayout = field(repr=False)
    strategy: Strategy
    workers: int
    transport: str
    output_manifest: Path
    tiles: dict = field(repr=False)
    phase_seconds: dict = field(default_factory=dict)
    producer_nodes: int = 0
    producer_peak_elements: int = 0
    perimeter_messages: int = 0
    offset_messages: int = 0

    def totals(self) -> IOCounters:
        total = IOCounters()
        for s in self.tiles.values():
            total.add(s.io)
        return total

    @property
    def cells(self) -> int:
        return len(self.tiles) * self.layout.tile_cells

    @property
    def stage1_payload_bytes(self) -> int:
        return sum(s.stage1_payload_bytes for s in self.tiles.values())

    @property
    def stage2_payload_bytes(self) -> int:
        return sum(s.stage2_payload_bytes for s in self.tiles.values())

    @property
    def envelope_bytes(self) -> int:
        return sum(s.envelope_bytes for s in self.tiles.values())


# --------------------------------------------------------------------------
# Consumer
# --------------------------------------------------------------------------


def _consumer_main(worker, layout, strategy, cache_dir, output_dir, inbox, outbox):
    strategy = Strategy.parse(strategy)
    counters = {}
    retained = {}
    solve_time = {}
    output_dir = Path(output_dir)
    cache = None

    def load_flowdirs(tile):
        F = read_flowdir_tile(layout.tile_path(*tile), layout.tile_width, layout.tile_height, counters[tile])
        vw, vh = layout.valid_extent(*tile)
        if (F[vh:, :] != NODATA).any() or (F[:, vw:] != NODATA).any():
            raise FormatError(f"tile {tile} has data outside the DEM extent")
        return F

    def load_weights(tile):
        path = layout.weight_path(*tile)
        if path is None:
            return None
        return read_weight_tile(path, layout.tile_width, layout.tile_height, counters[tile])

    while True:
        kind, body = inbox.get()
        if kind == "stop":
            return
        tile = None
        try:
            if kind == "solve":
                tile = tuple(body)
                counters[tile] = IOCounters()
                t0 = time.perf_counter()
                F = load_flowdirs(tile)
                sol = solve_tile(F, load_weights(tile))
                outbox.put(("perimeter", worker, messages.encode(tile, extract_payload(sol))))
                if strategy is Strategy.CACHE:
                    if cache is None:
                        cache = TileCache(cache_dir)
                    cache.counters = counters[tile]
                    cache.spill(tile, sol.A)
                elif strategy is Strategy.RETAIN:
                    retained[tile] = (F, sol.A)
                del sol, F
                solve_time[tile] = time.perf_counter() - t0
            elif kind == "finalize":
                tile, offsets = messages.decode(body)
                if tile not in counters:
                    raise ProtocolError(f"offsets for tile {tile}, which this worker never solved")
                t0 = time.perf_counter()
                if cache is not None:
                    cache.counters = counters[tile]
                stats = {}
                A = finalize_tile(
                    strategy,
                    tile,
                    lambda: load_flowdirs(tile),
                    offsets,
                    cache=cache,
                    retained=retained,
                    load_weights=lambda: load_weights(tile),
                    stats=stats,
                )
                if cache is not None:
                    cache.discard(tile)
                write_accum_tile(output_dir / _output_name(tile), A, counters[tile])
                io = counters.pop(tile)
                timings = {
                    "solve_seconds": solve_time.pop(tile),
                    "finalize_seconds": time.perf_counter() - t0,
                    "offset_cells_touched": stats.get("offset_cells_touched", 0),
                }
                outbox.put(("done", worker, tile, io.as_dict(), timings))
            else:
                raise ProtocolError(f"unknown command {kind!r}")
        except Exception as exc:  # reported to the producer, which aborts the job
            outbox.put(("error", worker, tile, type(exc).__name__, str(exc)))


def _output_name(tile):
    return f"accum_r{tile[0]}_c{tile[1]}.f64"


class _ThreadPool:
    def __init__(self, n, target_args):
        self.outbox = queue.Queue()
        self.inboxes = [queue.Queue() for _ in range(n)]
        self.workers = [
            threading.Thread(
                target=_consumer_main,
                args=(k, *target_args, self.inboxes[k], self.outbox),
                name=f"consumer-{k}",
                daemon=True,
            )
            for k in range(n)
        ]

    def start(self):
        for w in self.workers:
            w.start()

    def alive(self):
        return all(w.is_alive() for w in self.workers)

    def join(self, timeout=None):
        for w in self.workers:
            w.join(timeout)


class _ProcessPool(_ThreadPool):
    def __init__(self, n, target_args):
        ctx = multiprocessing.get_context("spawn")
        self.outbox = ctx.Queue()
        self.inboxes = [ctx.Queue() for _ in range(n)]
        self.workers = [
            ctx.Process(
                target=_consumer_main,
                args=(k, *target_args, self.inboxes[k], self.outbox),
                name=f"consumer-{k}",
                daemon=True,
            )
            for k in range(n)
        ]


# --------------------------------------------------------------------------
# Producer
# --------------------------------------------------------------------------


def run(job: JobConfig) -> RunReport:
    """Run both stages for every present tile and write the output tiles."""
    t_start = time.perf_counter()
    layout = job.load_layout()
    tiles = layout.present_tiles()
    if not tiles:
        raise FormatError("layout contains no present tiles")
    out_dir = Path(job.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache_dir = None
    if job.strategy is Strategy.CACHE:
        cache_dir = Path(job.cache_dir) if job.cache_dir is not None else out_dir / "cache"
    if job.strategy is Strategy.RETAIN and job.memory_budget is not None:
        need = len(tiles) * layout.tile_cells * 9
        if need > job.memory_budget:
            warnings.warn(f"RETAIN needs ~{need} bytes of intermediates, budget is {job.memory_budget}")

    owner = {}
    for k, ids in enumerate(assign_tiles(range(len(tiles)), job.workers)):
        for tid in ids:
            owner[tiles[tid]] = k
    order = list(tiles)
    if job.dispatch_seed is not None:
        random.Random(job.dispatch_seed).shuffle(order)

    stats = {t: TileStats(worker=owner[t]) for t in tiles}
    pool_cls = _ThreadPool if job.transport == "thread" else _ProcessPool
    pool = pool_cls(job.workers, (layout, job.strategy.value, cache_dir, out_dir))
    pool.start()
    phases = {}
    try:
        t0 = time.perf_counter()
        for t in order:
            pool.inboxes[owner[t]].put(("solve", t))
        payloads = {}
        while len(payloads) < len(tiles):
            msg = _receive(pool)
            if msg[0] != "perimeter":
                raise ProtocolError(f"unexpected {msg[0]!r} message during stage 1")
            tile, payload = messages.decode(msg[2])
            if tile not in stats or tile in payloads:
                raise ProtocolError(f"unexpected or repeated perimeter payload for tile {tile}")
            payloads[tile] = payload
            stats[tile].stage1_payload_bytes += payload.nbytes
            stats[tile].envelope_bytes += len(msg[2]) - payload.nbytes
        phases["stage1"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        tracker = AllocationTracker()
        graph = build_graph(layout, payloads, tracker)
        offsets = solve_global(graph, tracker)
        del payloads
        phases["global"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        for t in order:
            body = messages.encode(t, offsets[t])
            stats[t].stage2_payload_bytes += offsets[t].nbytes
            stats[t].envelope_bytes += len(body) - offsets[t].nbytes
            pool.inboxes[owner[t]].put(("finalize", body))
        finished = set()
        while len(finished) < len(tiles):
            msg = _receive(pool)
            if msg[0] != "done":
                raise ProtocolError(f"unexpected {msg[0]!r} message during stage 2")
            _, worker, tile, io, timings = msg
            tile = tuple(tile)
            if tile in finished or owner.get(tile) != worker:
                raise ProtocolError(f"unexpected completion of tile {tile} from worker {worker}")
            finished.add(tile)
            s = stats[tile]
            s.io = IOCounters(**io)
            s.solve_seconds = timings["solve_seconds"]
            s.finalize_seconds = timings["finalize_seconds"]
            s.offset_cells_touched = timings["offset_cells_touched"]
        phases["stage2"] = time.perf_counter() - t0
    finally:
        for inbox in pool.inboxes:
            inbox.put(("stop", None))
        pool.join(timeout=10)

    out_tiles = [
        [str(out_dir / _output_name((r, c))) if layout.is_present(r, c) else None for c in range(layout.grid_cols)]
        for r in range(layout.grid_rows)
    ]
    out_layout = TileLayout(layout.dem_width, layout.dem_height, layout.tile_width, layout.tile_height, out_tiles)
    manifest = write_manifest(out_dir / "manifest.json", out_layout, kind="accumulation")
    phases["total"] = time.perf_counter() - t_start
    return RunReport(
        layout=layout,
        strategy=job.strategy,
        workers=job.workers,
        transport=job.transport,
        output_manifest=manifest,
        tiles=stats,
        phase_seconds=phases,
        producer_nodes=graph.node_count,
        producer_peak_elements=tracker.peak_elements,
        perimeter_messages=len(tiles),
        offset_messages=len(tiles),
    )


def _receive(pool):
    while True:
        try:
            msg = pool.outbox.get(timeout=_POLL_SECONDS)
        except queue.Empty:
            if not pool.alive():
                raise WorkerError(None, "a consumer exited unexpectedly") from None
            continue
        if msg[0] == "error":
            _, worker, tile, name, text = msg
            log.error("consumer %d failed on tile %s: %s: %s", worker, tile, name, text)
            if name == CyclicFlowError.__name__:
                raise CyclicFlowError(f"tile {tile}: {text}")
            raise WorkerError(tile, f"{name}: {text}")
        return msg


def stats_report(report: RunReport) -> dict:
    """Machine-readable summary of a run; the schema is stable."""
    totals = report.totals()
    cells = report.cells
    reads = totals.flowdir_cells_read + totals.cache_cells_read
    writes = totals.accum_cells_written + totals.cache_cells_written
    n = len(report.tiles)
    payload = report.stage1_payload_bytes + report.stage2_payload_bytes
    per_tile = []
    for (r, c), s in sorted(report.tiles.items()):
        per_tile.append(
            {
                "tile": [r, c],
                "worker": s.worker,
                **s.io.as_dict(),
                "stage1_payload_bytes": s.stage1_payload_bytes,
                "stage2_payload_bytes": s.stage2_payload_bytes,
                "envelope_bytes": s.envelope_bytes,
                "tx_bytes": s.stage1_payload_bytes + s.stage2_payload_bytes,
                "solve_seconds": s.solve_seconds,
                "finalize_seconds": s.finalize_seconds,
                "offset_cells_touched": s.offset_cells_touched,
            }
        )
    return {
        "schema_version": STATS_SCHEMA_VERSION,
        "strategy": report.strategy.value,
        "workers": report.workers,
        "transport": report.transport,
        "dem": {"width": report.layout.dem_width, "height": report.layout.dem_height},
        "tile": {"width": report.layout.tile_width, "height": report.layout.tile_height},
        "tiles_present": n,
        "cells": cells,
        "perimeter_cells_per_tile": report.layout.perimeter,
        "counters": totals.as_dict(),
        "reads_per_cell": reads / cells,
        "writes_per_cell": writes / cells,
        "stage1_payload_bytes": report.stage1_payload_bytes,
        "stage2_payload_bytes": report.stage2_payload_bytes,
        "envelope_bytes": report.envelope_bytes,
        "envelope_overhead": report.envelope_bytes / payload,
        "tx_per_tile_bytes": payload / n,
        "perimeter_messages": report.perimeter_messages,
        "offset_messages": report.offset_messages,
        "producer_nodes": report.producer_nodes,
        "producer_peak_elements": report.producer_peak_elements,
        "phase_seconds": dict(report.phase_seconds),
        "output_manifest": str(report.output_manifest),
        "per_tile": per_tile,
    }
