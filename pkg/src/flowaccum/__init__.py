"""Tiled, parallel flow accumulation for D8 flow-direction rasters.

Each tile is solved independently, only perimeter data travels to a single
producer which solves a small global graph, and the resulting offsets are
walked back down each tile's flow paths.
"""

from .errors import (
    CacheError,
    CyclicFlowError,
    FlowAccumError,
    FormatError,
    ProtocolError,
    StateError,
    ValidationError,
    WorkerError,
)
from .finalize import Strategy, apply_offsets, finalize_tile
from .global_graph import AllocationTracker, GlobalGraph, build_graph, solve_global
from .messages import OffsetPayload, PerimeterPayload
from .orchestrator import JobConfig, RunReport, assign_tiles, run, stats_report
from .raster import (
    FLOW_EXTERNAL,
    FLOW_TERMINATES,
    NODATA,
    NOFLOW,
    OUTSIDE_DEM,
    InTile,
    TileLayout,
    dir_offset,
    global_neighbor,
    perimeter_count,
    perimeter_to_xy,
    xy_to_perimeter,
)
from .store import IOCounters, TileCache, read_manifest, write_manifest
from .tile import TileSolution, extract_payload, follow_path, solve_tile
from .verify import brute_oracle, compare, generate_synthetic, mosaic_accum, oracle_solve

__version__ = "0.1.0"
