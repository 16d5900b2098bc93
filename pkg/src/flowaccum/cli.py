"""Command-line entry point: ``flowaccum {generate,solve,oracle,compare,stats}``.

Exit codes: 0 success, 1 runtime error (or mismatches for ``compare``),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import FlowAccumError
from .orchestrator import JobConfig, run, stats_report
from .store import read_manifest
from .verify import compare, generate_synthetic, mosaic_accum, mosaic_flowdirs, mosaic_weights, oracle_solve

log = logging.getLogger("flowaccum")


def _fraction(text):
    v = float(text)
    if not 0 <= v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1)")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowaccum", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic tiled flow-direction dataset")
    g.add_argument("--width", type=_positive, required=True)
    g.add_argument("--height", type=_positive, required=True)
    g.add_argument("--tile-width", type=_positive, required=True)
    g.add_argument("--tile-height", type=_positive, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--nodata-fraction", type=_fraction, default=0.0)
    g.add_argument("--absent-fraction", type=_fraction, default=0.0)
    g.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("solve", help="run the tiled pipeline")
    s.add_argument("manifest", type=Path)
    s.add_argument("--strategy", choices=["evict", "cache", "retain"], default="evict")
    s.add_argument("--workers", type=_positive, default=1)
    s.add_argument("--cache-dir", type=Path)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--weights", type=Path, help="manifest of float64 weight tiles")
    s.add_argument("--transport", choices=["thread", "process"], default="thread")
    s.add_argument("--stats", type=Path, help="stats file (default: OUT/stats.json)")

    o = sub.add_parser("oracle", help="solve the merged, untiled grid")
    o.add_argument("manifest", type=Path)
    o.add_argument("--out", type=Path, required=True, help="output .npy file")
    o.add_argument("--weights", type=Path)

    c = sub.add_parser("compare", help="exact comparison of two accumulation grids")
    c.add_argument("a", type=Path, help=".npy grid, or output directory / manifest")
    c.add_argument("b", type=Path)
    c.add_argument("--max-report", type=int, default=10)

    st = sub.add_parser("stats", help="summarise a stats file")
    st.add_argument("path", type=Path, help="stats.json or the run's output directory")
    st.add_argument("--json", action="store_true", help="print the full JSON report")
    return parser


def _load_grid(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        return np.load(path)
    return mosaic_accum(path)


def cmd_generate(args):
    dem = generate_synthetic(
        args.width,
        args.height,
        args.tile_width,
        args.tile_height,
        args.seed,
        args.nodata_fraction,
        args.absent_fraction,
    )
    manifest = dem.write(args.out)
    print(f"wrote {int(dem.present.sum())} tiles, manifest {manifest}")
    return 0


def cmd_solve(args):
    job = JobConfig(
        manifest=args.manifest,
        output_dir=args.out,
        strategy=args.strategy,
        workers=args.workers,
        cache_dir=args.cache_dir,
        weights=args.weights,
        transport=args.transport,
    )
    report = stats_report(run(job))
    stats_path = args.stats or args.out / "stats.json"
    stats_path.write_text(json.dumps(report, indent=1) + "\n")
    _print_summary(report)
    print(f"stats: {stats_path}")
    return 0


def cmd_oracle(args):
    layout = read_manifest(args.manifest)
    w = mosaic_weights(read_manifest(args.weights, kind="weights")) if args.weights else mosaic_weights(layout)
    A = oracle_solve(mosaic_flowdirs(layout), w)
    np.save(args.out, A)
    print(f"wrote {A.shape[1]}x{A.shape[0]} oracle grid to {args.out}")
    return 0


def cmd_compare(args):
    rep = compare(_load_grid(args.a), _load_grid(args.b), args.max_report)
    print(json.dumps(rep.as_dict(), indent=1))
    return 0 if rep.ok else 1


def _print_summary(report):
    print(
        f"{report['strategy']}: {report['tiles_present']} tiles, {report['workers']} workers, "
        f"{report['phase_seconds'].get('total', 0.0):.3f} s"
    )
    print(f"  reads/cell  {report['reads_per_cell']:g}   writes/cell {report['writes_per_cell']:g}")
    print(
        f"  sent {report['stage2_payload_bytes']} B  received {report['stage1_payload_bytes']} B  "
        f"tx/tile {report['tx_per_tile_bytes']:.0f} B  envelope {100 * report['envelope_overhead']:.2f}%"
    )


def cmd_stats(args):
    path = args.path / "stats.json" if args.path.is_dir() else args.path
    report = json.loads(path.read_text())
    if args.json:
        print(json.dumps(report, indent=1))
    else:
        _print_summary(report)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "oracle": cmd_oracle,
    "compare": cmd_compare,
    "stats": cmd_stats,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (FlowAccumError, OSError, ValueError) as exc:
        print(f"flowaccum {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
