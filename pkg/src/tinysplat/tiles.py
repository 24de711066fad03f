"""Screen tiling and primitive-to-tile binning.

Tiles are 16x8 pixel rectangles (128 pixels) processed by a 32-lane
group. Each lane owns a vertical run of 4 pixels: lane l covers column
(l % 16) and rows 4*(l // 16) .. 4*(l // 16)+3 of its tile, so the inner
evaluation walks along y.

A primitive lands in every tile whose rectangle its footprint disc
actually touches (closest-point test, not a bounding-box test), and each
tile's list is sorted by primitive depth with index as the tie-break.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TILE_W = 16
TILE_H = 8
PIXELS_PER_LANE = 4
LANES = (TILE_W * TILE_H) // PIXELS_PER_LANE  # 32

# static lane layout within a tile
_lane = np.arange(LANES)
LANE_X = _lane % TILE_W                      # (32,) column offsets
LANE_Y0 = (_lane // TILE_W) * PIXELS_PER_LANE  # (32,) first row of each lane's run
SCAN_I = np.arange(PIXELS_PER_LANE)          # (4,) offsets along the run


@dataclass
class TileWorkload:
    tile_x: int
    tile_y: int
    origin: tuple          # pixel (x0, y0)
    primitives: np.ndarray  # indices into the projected/compact buffers, depth order


def tile_grid(resolution):
    W, H = resolution
    return (W + TILE_W - 1) // TILE_W, (H + TILE_H - 1) // TILE_H


def _disc_hits_rect(cx, cy, r, x0, y0, x1, y1):
    """Distance from (cx, cy) to the rect [x0,x1]x[y0,y1] is <= r. Vectorized."""
    dx = np.maximum(np.maximum(x0 - cx, cx - x1), 0.0)
    dy = np.maximum(np.maximum(y0 - cy, cy - y1), 0.0)
    return dx * dx + dy * dy <= r * r


def bin_tiles(xy, depth, radius, mask, resolution):
    """Build per-tile depth-sorted primitive lists.

    Parameters are parallel arrays over the (compact) primitive buffer;
    `mask` selects primitives eligible to generate fragments. Returns a
    list of TileWorkload for non-empty tiles only.
    """
    W, H = resolution
    tx_n, ty_n = tile_grid(resolution)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    cx, cy, r = xy[idx, 0], xy[idx, 1], radius[idx]

    tx0 = np.clip(np.floor((cx - r) / TILE_W).astype(np.int64), 0, tx_n - 1)
    tx1 = np.clip(np.floor((cx + r) / TILE_W).astype(np.int64), 0, tx_n - 1)
    ty0 = np.clip(np.floor((cy - r) / TILE_H).astype(np.int64), 0, ty_n - 1)
    ty1 = np.clip(np.floor((cy + r) / TILE_H).astype(np.int64), 0, ty_n - 1)
    counts = (tx1 - tx0 + 1) * (ty1 - ty0 + 1)
    total = int(counts.sum())
    if total == 0:
        return []

    owner = np.repeat(np.arange(idx.size), counts)  # position into idx
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    local = np.arange(total) - offsets[owner]
    nx = (tx1 - tx0 + 1)[owner]
    tx = tx0[owner] + local % nx
    ty = ty0[owner] + local // nx

    # exact disc/rect test; tiles at the image border are clipped to real pixels
    rx0 = tx * TILE_W
    ry0 = ty * TILE_H
    rx1 = np.minimum(rx0 + TILE_W - 1, W - 1)
    ry1 = np.minimum(ry0 + TILE_H - 1, H - 1)
    hit = _disc_hits_rect(cx[owner], cy[owner], r[owner], rx0, ry0, rx1, ry1)
    owner, tx, ty = owner[hit], tx[hit], ty[hit]
    if owner.size == 0:
        return []

    tile_id = ty * tx_n + tx
    prim = idx[owner]
    order = np.lexsort((prim, depth[prim], tile_id))
    tile_id, prim = tile_id[order], prim[order]

    tiles = []
    boundaries = np.flatnonzero(np.diff(tile_id)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(tile_id)]])
    for s, e in zip(starts, ends):
        t = int(tile_id[s])
        tyi, txi = divmod(t, tx_n)
        tiles.append(TileWorkload(
            tile_x=txi, tile_y=tyi,
            origin=(txi * TILE_W, tyi * TILE_H),
            primitives=prim[s:e],
        ))
    return tiles
