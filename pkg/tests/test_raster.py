import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowaccum.errors import FormatError, ValidationError
from flowaccum.raster import (
    FLOW_EXTERNAL,
    MAX_PERIMETER,
    OUTSIDE_DEM,
    InTile,
    TileLayout,
    dir_offset,
    global_neighbor,
    offset_to_dir,
    perimeter_cells,
    perimeter_count,
    perimeter_to_xy,
    validate_flowdirs,
    xy_to_perimeter,
    xy_to_perimeter_many,
)


@pytest.mark.parametrize(
    "code, expected",
    [(3, (1, 0)), (0, None), (8, (-1, -1)), (255, None), (1, (0, -1)), (5, (0, 1)), (6, (-1, 1))],
)
def test_dir_offset_table(code, expected):
    assert dir_offset(code) == expected


@pytest.mark.parametrize("code", [9, 10, 100, 254, -1, 256])
def test_dir_offset_rejects_illegal_codes(code):
    with pytest.raises(ValidationError):
        dir_offset(code)


def test_dir_offset_is_bijection_onto_neighbourhood():
    steps = {dir_offset(d) for d in range(1, 9)}
    assert steps == {(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)} - {(0, 0)}
    assert all(offset_to_dir(*dir_offset(d)) == d for d in range(1, 9))


def test_validate_flowdirs_rejects_illegal_byte():
    F = np.full((3, 3), 3, dtype=np.uint8)
    F[1, 2] = 42
    with pytest.raises(ValidationError, match="42"):
        validate_flowdirs(F)


def test_perimeter_walk_examples():
    assert perimeter_to_xy(0, 7, 7) == (0, 0)
    assert perimeter_to_xy(6, 7, 7) == (6, 0)
    assert perimeter_to_xy(23, 7, 7) == (0, 1)
    assert perimeter_count(7, 7) == 24
    assert xy_to_perimeter(0, 0, 7, 7) == 0
    assert xy_to_perimeter(6, 6, 7, 7) == 12
    with pytest.raises(ValueError):
        xy_to_perimeter(3, 3, 7, 7)
    with pytest.raises(IndexError):
        perimeter_to_xy(24, 7, 7)


def test_perimeter_walk_7x7_by_enumeration():
    # Clockwise boundary walk written out independently of the implementation.
    walk = [(x, 0) for x in range(7)] + [(6, y) for y in range(1, 7)]
    walk += [(x, 6) for x in range(5, -1, -1)] + [(0, y) for y in range(5, 0, -1)]
    assert [perimeter_to_xy(p, 7, 7) for p in range(24)] == walk


def test_perimeter_round_trip_exhaustive():
    for W in range(1, 65):
        for H in range(1, 65):
            P = perimeter_count(W, H)
            cells = [perimeter_to_xy(p, W, H) for p in range(P)]
            assert len(set(cells)) == P
            for x, y in cells:
                assert x in (0, W - 1) or y in (0, H - 1)
            assert [xy_to_perimeter(x, y, W, H) for x, y in cells] == list(range(P))
            xs, ys = perimeter_cells(W, H)
            assert list(zip(xs.tolist(), ys.tolist())) == cells
            assert xy_to_perimeter_many(xs, ys, W, H).tolist() == list(range(P))


def test_perimeter_count_formula_and_headroom():
    assert perimeter_count(16384, 16384) == 65532 <= MAX_PERIMETER < FLOW_EXTERNAL
    assert perimeter_count(3601, 3601) == 14400
    assert perimeter_count(10812, 10812) == 43244
    assert perimeter_count(1, 5) == 5
    assert perimeter_count(5, 1) == 5
    assert perimeter_count(2, 2) == 4


@given(st.integers(2, 300), st.integers(2, 300))
def test_perimeter_count_property(W, H):
    assert perimeter_count(W, H) == 2 * W + 2 * H - 4


def test_degenerate_tiles_walk_row_major():
    assert [perimeter_to_xy(p, 4, 1) for p in range(4)] == [(0, 0), (1, 0), (2, 0), (3, 0)]
    assert [perimeter_to_xy(p, 1, 3) for p in range(3)] == [(0, 0), (0, 1), (0, 2)]


def _layout(rows, cols, tw=7, th=7, absent=()):
    tiles = [[None if (r, c) in absent else f"t{r}{c}" for c in range(cols)] for r in range(rows)]
    return TileLayout(cols * tw, rows * th, tw, th, tiles)


def test_global_neighbor_examples():
    layout = _layout(3, 3)
    assert global_neighbor(layout, (1, 1), (6, 3), 3) == InTile((1, 2), (0, 3))
    assert global_neighbor(layout, (0, 0), (0, 0), 8) is OUTSIDE_DEM
    assert global_neighbor(layout, (1, 1), (6, 6), 4) == InTile((2, 2), (0, 0))
    assert global_neighbor(_layout(3, 3, absent={(2, 2)}), (1, 1), (6, 6), 4) is OUTSIDE_DEM


def test_global_neighbor_respects_dem_extent_not_padding():
    # 10 wide DEM in 7-wide tiles: column 10..13 of tile col 1 is padding.
    layout = TileLayout(10, 7, 7, 7, [["a", "b"]])
    assert global_neighbor(layout, (0, 0), (6, 2), 3) == InTile((0, 1), (0, 2))
    assert global_neighbor(layout, (0, 1), (2, 2), 3) is OUTSIDE_DEM


def test_tile_layout_validation():
    layout = _layout(2, 3, absent={(0, 1)})
    assert (layout.grid_rows, layout.grid_cols) == (2, 3)
    assert layout.present_tiles() == [(0, 0), (0, 2), (1, 0), (1, 1), (1, 2)]
    assert TileLayout(15, 8, 7, 7, [["a"] * 3] * 2).grid_cols == 3
    with pytest.raises(FormatError):
        TileLayout(15, 8, 0, 7, [[]])
    with pytest.raises(FormatError):
        TileLayout(14, 7, 7, 7, [["a"]])
    with pytest.raises(FormatError):
        TileLayout(20000, 20000, 20000, 20000, [["a"]])
