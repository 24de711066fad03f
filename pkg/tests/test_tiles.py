import numpy as np

from tinysplat.tiles import (LANE_X, LANE_Y0, PIXELS_PER_LANE, TILE_H, TILE_W,
                             bin_tiles, tile_grid)


def test_layout_constants():
    assert TILE_W * TILE_H == 128
    assert LANE_X.size == 32
    # every tile pixel is owned by exactly one (lane, offset) pair
    seen = set()
    for lane in range(32):
        for i in range(PIXELS_PER_LANE):
            seen.add((int(LANE_X[lane]), int(LANE_Y0[lane]) + i))
    assert seen == {(x, y) for x in range(TILE_W) for y in range(TILE_H)}


def test_single_small_primitive_one_tile():
    xy = np.array([[8.0, 4.0]])  # middle of tile (0, 0)
    tiles = bin_tiles(xy, np.array([1.0]), np.array([1.0]), np.array([True]), (64, 64))
    assert len(tiles) == 1
    assert tiles[0].origin == (0, 0)
    np.testing.assert_array_equal(tiles[0].primitives, [0])


def test_corner_primitive_four_tiles():
    # centered on the shared corner of four tiles, radius spans all of them
    xy = np.array([[16.0, 8.0]])
    tiles = bin_tiles(xy, np.array([1.0]), np.array([3.0]), np.array([True]), (64, 64))
    assert len(tiles) == 4
    assert sorted(t.origin for t in tiles) == [(0, 0), (0, 8), (16, 0), (16, 8)]


def test_disc_test_beats_bbox():
    # bbox overlaps the corner tile but the disc misses it
    xy = np.array([[16.0 + 10.0, 8.0 + 10.0]])
    r = np.array([11.0])  # reaches past the tile corner (6,7 away) only diagonally
    tiles = bin_tiles(xy, np.array([1.0]), r, np.array([True]), (64, 64))
    origins = {t.origin for t in tiles}
    # distance from (26,18) to tile (0,0) rect corner (15,7) is sqrt(121+121)>11
    assert (0, 0) not in origins
    assert (16, 8) in origins


def test_binning_matches_bruteforce_oracle(rng):
    W, H = 80, 56
    n = 120
    xy = np.column_stack([rng.uniform(-10, W + 10, n), rng.uniform(-10, H + 10, n)])
    depth = rng.uniform(0.5, 10.0, n)
    radius = rng.uniform(0.5, 12.0, n)
    mask = rng.random(n) > 0.1
    tiles = bin_tiles(xy, depth, radius, mask, (W, H))

    # oracle: O(N*T) closest-point overlap with depth/index sort
    tx_n, ty_n = tile_grid((W, H))
    expected = {}
    for ty in range(ty_n):
        for tx in range(tx_n):
            x0, y0 = tx * TILE_W, ty * TILE_H
            x1, y1 = min(x0 + TILE_W - 1, W - 1), min(y0 + TILE_H - 1, H - 1)
            hits = []
            for i in range(n):
                if not mask[i]:
                    continue
                dx = max(x0 - xy[i, 0], xy[i, 0] - x1, 0.0)
                dy = max(y0 - xy[i, 1], xy[i, 1] - y1, 0.0)
                if dx * dx + dy * dy <= radius[i] ** 2:
                    hits.append(i)
            if hits:
                hits.sort(key=lambda i: (depth[i], i))
                expected[(x0, y0)] = hits
    got = {t.origin: list(t.primitives) for t in tiles}
    assert got == expected


def test_depth_sort_with_index_tiebreak():
    xy = np.array([[8.0, 4.0], [8.5, 4.1], [7.5, 3.9]])
    depth = np.array([2.0, 1.0, 1.0])  # indices 1 and 2 tie
    tiles = bin_tiles(xy, depth, np.full(3, 1.0), np.ones(3, bool), (16, 8))
    np.testing.assert_array_equal(tiles[0].primitives, [1, 2, 0])


def test_empty_inputs():
    assert bin_tiles(np.zeros((0, 2)), np.zeros(0), np.zeros(0), np.zeros(0, bool), (32, 32)) == []
