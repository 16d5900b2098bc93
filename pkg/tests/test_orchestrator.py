import itertools

import numpy as np
import pytest

from conftest import random_acyclic, tile_dataset
from flowaccum.errors import CyclicFlowError, FormatError, WorkerError
from flowaccum.orchestrator import JobConfig, assign_tiles, run, stats_report
from flowaccum.raster import NODATA
from flowaccum.verify import generate_synthetic, mosaic_accum, oracle_solve


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = generate_synthetic(90, 70, 16, 16, seed=11, nodata_fraction=0.1, absent_tile_fraction=0.2)
    root = tmp_path_factory.mktemp("ds")
    return d, d.write(root / "in")


def test_assign_tiles():
    assert assign_tiles(range(5), 2) == [[0, 2, 4], [1, 3]]
    assert assign_tiles(range(2), 4) == [[0], [1], [], []]
    with pytest.raises(ValueError):
        assign_tiles(range(3), 0)


def test_outputs_identical_across_strategies_workers_and_order(dataset, tmp_path):
    d, manifest = dataset
    expected = oracle_solve(d.flowdirs)
    reference = None
    for k, (strategy, workers, seed) in enumerate(
        itertools.product(["evict", "cache", "retain"], [1, 2, 7], [None, 5])
    ):
        run(JobConfig(manifest, tmp_path / f"o{k}", strategy, workers, dispatch_seed=seed))
        A = mosaic_accum(tmp_path / f"o{k}")
        np.testing.assert_array_equal(A, expected)
        if reference is None:
            reference = A
        assert A.tobytes() == reference.tobytes()


def test_retain_and_evict_leave_no_intermediates(dataset, tmp_path):
    _, manifest = dataset
    for strategy in ("retain", "evict"):
        out = tmp_path / strategy
        run(JobConfig(manifest, out, strategy, 2, cache_dir=tmp_path / f"{strategy}_cache"))
        assert not (tmp_path / f"{strategy}_cache").exists()
        assert {p.suffix for p in out.iterdir()} == {".f64", ".json"}


def test_cache_uses_and_cleans_cache_dir(dataset, tmp_path):
    _, manifest = dataset
    rep = stats_report(run(JobConfig(manifest, tmp_path / "o", "cache", 3, cache_dir=tmp_path / "c")))
    assert (tmp_path / "c").is_dir() and not any((tmp_path / "c").iterdir())
    assert rep["counters"]["cache_cells_written"] == rep["cells"]


@pytest.mark.parametrize("strategy,reads,writes", [("evict", 2, 1), ("retain", 1, 1), ("cache", 3, 2)])
def test_counters(dataset, tmp_path, strategy, reads, writes):
    d, manifest = dataset
    rep = stats_report(run(JobConfig(manifest, tmp_path, strategy, 2)))
    P = 2 * 16 + 2 * 16 - 4
    n = int(d.present.sum())
    assert rep["reads_per_cell"] == reads and rep["writes_per_cell"] == writes
    assert rep["stage1_payload_bytes"] == n * P * 11
    assert rep["stage2_payload_bytes"] == n * P * 8
    assert rep["perimeter_messages"] == rep["offset_messages"] == n
    assert rep["envelope_bytes"] == n * 2 * 13
    assert rep["tx_per_tile_bytes"] == P * 19
    assert all(t["tx_bytes"] == P * 19 for t in rep["per_tile"])


def test_process_transport(dataset, tmp_path):
    d, manifest = dataset
    run(JobConfig(manifest, tmp_path, "cache", 2, transport="process"))
    np.testing.assert_array_equal(mosaic_accum(tmp_path), oracle_solve(d.flowdirs))


def test_weights(tmp_path, rng):
    F = random_acyclic(rng, 40, 30, nodata=0.1)
    w = rng.random((40, 30))
    manifest = tile_dataset(tmp_path, F, 8, 8, weights=w)
    for strategy in ("evict", "cache", "retain"):
        run(JobConfig(manifest, tmp_path / strategy, strategy, 3))
        np.testing.assert_allclose(mosaic_accum(tmp_path / strategy), oracle_solve(F, w), rtol=1e-12)


def test_worker_failure_names_the_tile(tmp_path, rng):
    F = random_acyclic(rng, 16, 16)
    manifest = tile_dataset(tmp_path, F, 8, 8)
    (tmp_path / "t_1_0.fd").write_bytes(b"\x03" * 63 + b"\x09")  # illegal code 9
    with pytest.raises(WorkerError) as info:
        run(JobConfig(manifest, tmp_path / "out", "evict", 2))
    assert info.value.tile == (1, 0)
    (tmp_path / "t_1_0.fd").write_bytes(b"\x03" * 10)
    with pytest.raises(FormatError, match="10 bytes"):
        run(JobConfig(manifest, tmp_path / "out", "evict", 2))


def test_missing_tile_file(tmp_path, rng):
    manifest = tile_dataset(tmp_path, random_acyclic(rng, 16, 16), 8, 8)
    (tmp_path / "t_0_1.fd").unlink()
    with pytest.raises(WorkerError, match="FileNotFoundError"):
        run(JobConfig(manifest, tmp_path / "out", "retain", 1))


def test_cycles_propagate(tmp_path):
    F = np.full((8, 16), NODATA, dtype=np.uint8)
    F[0, 7], F[0, 8] = 3, 7  # a two-cell cycle across the tile boundary
    manifest = tile_dataset(tmp_path, F, 8, 8)
    with pytest.raises(CyclicFlowError):
        run(JobConfig(manifest, tmp_path / "a", "evict", 2))
    F[0, 7], F[0, 8] = 3, NODATA
    F[4, 1], F[4, 2] = 3, 7  # a cycle inside one tile
    manifest = tile_dataset(tmp_path, F, 8, 8)
    with pytest.raises(CyclicFlowError):
        run(JobConfig(manifest, tmp_path / "b", "evict", 2))


def test_padding_must_be_nodata(tmp_path):
    F = np.full((12, 12), 3, dtype=np.uint8)
    manifest = tile_dataset(tmp_path, F, 8, 8)
    block = np.full((8, 8), 3, dtype=np.uint8)
    block.tofile(tmp_path / "t_1_1.fd")
    with pytest.raises(WorkerError, match="outside the DEM"):
        run(JobConfig(manifest, tmp_path / "out"))


def test_job_config_validation(tmp_path):
    with pytest.raises(ValueError):
        JobConfig(tmp_path / "m.json", tmp_path, "keep")
    with pytest.raises(ValueError):
        JobConfig(tmp_path / "m.json", tmp_path, workers=0)
    with pytest.raises(ValueError):
        JobConfig(tmp_path / "m.json", tmp_path, transport="carrier-pigeon")


def test_all_absent_layout_rejected(tmp_path):
    manifest = tile_dataset(tmp_path, np.zeros((8, 8), dtype=np.uint8), 8, 8, absent={(0, 0)})
    with pytest.raises(FormatError):
        run(JobConfig(manifest, tmp_path / "out"))
