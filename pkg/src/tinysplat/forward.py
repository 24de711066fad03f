"""Tile-based forward rendering.

Alpha compositing runs front to back per pixel: alpha = opacity * G with
G the 2D Gaussian footprint value, clamped to alpha_max; fragments below
alpha_min are skipped; a pixel stops accepting fragments once its
transmittance falls under t_stop. Final color is sum(T * alpha * c) plus
the remaining transmittance times the background.

Two kernels evaluate G. The scanline kernel expands the exponent along
each lane's 4-pixel vertical run as basic + linear*i + quad*i^2, paying
the full quadratic form once per run and two fused multiply-adds per
extra pixel; the naive kernel pays the full form at every pixel. Both
produce the same image to within float rounding, and an OpCounter can be
attached to either to tally the multiply-class work they perform.

The half-precision kernel repeats the scanline algorithm with G, T,
alpha and color rounded to IEEE binary16 after every arithmetic
operation, to measure what a 16-bit blending path costs in accuracy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraView
from .projection import ProjectedScene, build_frustum, project_scene
from .scene import SceneSoA
from .tiles import (LANE_X, LANE_Y0, PIXELS_PER_LANE, SCAN_I, TILE_H, TILE_W,
                    TileWorkload, bin_tiles)

# multiply-class cost of the exponent math (additions that cannot fuse count once)
OPS_BASIC = 9    # full quadratic form, from scratch
OPS_LINEAR = 1   # reuses the c*dy product from basic
OPS_QUAD = 1     # -0.5 * c
OPS_PER_PIXEL_SCANLINE = 2    # two FMAs against precomputed i, i^2
OPS_PER_PIXEL_NAIVE = OPS_BASIC


class OpCounter:
    """Tallies multiply-class floating ops charged by the blend kernels."""

    def __init__(self):
        self.ops = 0
        self.primitive_scanlines = 0

    def charge(self, ops: int, scanlines: int = 0):
        self.ops += int(ops)
        self.primitive_scanlines += int(scanlines)

    @property
    def ops_per_scanline(self) -> float:
        return self.ops / max(self.primitive_scanlines, 1)


@dataclass
class RasterConfig:
    dtype: str = "float32"          # compute dtype: "float32" | "float64"
    kernel: str = "scanline"        # "scanline" | "naive"
    alpha_min: float = 1.0 / 255.0
    alpha_max: float = 0.99
    t_stop: float = 1e-4
    background: tuple = (0.0, 0.0, 0.0)
    low_pass: float = 0.3
    use_culling: bool = True
    conic_reduce: str = "exp_aligned"  # backward: "exp_aligned" | "tree"

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


@dataclass
class RenderOutput:
    color: np.ndarray           # (H, W, 3) in [0, 1] range of the model
    transmittance: np.ndarray   # (H, W) final T per pixel
    frag_count: np.ndarray      # (H, W) int32 blended fragments per pixel


@dataclass
class RenderContext:
    """Everything the backward pass replays: projection results, tile lists
    and the compaction map, pinned to the scene generation that produced them."""

    generation: int
    camera: CameraView
    config: RasterConfig
    projected: ProjectedScene   # over the compact buffer
    compact_map: np.ndarray     # compact slot -> full scene index
    n_total: int
    n_clusters: int
    tiles: list
    visible_clusters: int = 0
    culled_clusters: int = 0


def scanline_coeffs(conic, dx, dy):
    """Exponent coefficients for one vertical pixel run.

    G at run offset i equals exp(basic + linear*i + quad*i^2) where
    (dx, dy) is (center - first pixel). Vectorized over leading dims;
    conic is (..., 3).
    """
    a, b, c = conic[..., 0], conic[..., 1], conic[..., 2]
    basic = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy)
    linear = b * dx + c * dy
    quad = -0.5 * c
    return basic, linear, quad


def gaussian_direct(conic, dx, dy):
    """Footprint value straight from the quadratic form (reference kernel)."""
    a, b, c = conic[..., 0], conic[..., 1], conic[..., 2]
    return np.exp(-0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy))


def _lane_pixels(origin, resolution, dtype):
    """Pixel coordinates covered by the 32 lanes of a tile.

    Returns px (32,), py0 (32,), and an in-image mask (32, 4).
    """
    x0, y0 = origin
    W, H = resolution
    px = (x0 + LANE_X).astype(dtype)
    py0 = (y0 + LANE_Y0).astype(dtype)
    valid = ((x0 + LANE_X) < W)[:, None] & ((y0 + LANE_Y0[:, None] + SCAN_I) < H)
    return px, py0, valid


def _tile_G(projected, prim, px, py0, dtype, kernel, counter):
    """Footprint values for every (primitive, lane, run offset) of a tile."""
    xy = projected.xy[prim].astype(dtype)
    conic = projected.conic[prim].astype(dtype)
    dx = xy[:, 0:1] - px[None, :]     # (P, 32)
    dy = xy[:, 1:2] - py0[None, :]    # (P, 32) offset to the first pixel of each run
    n_scan = prim.size * px.size
    if kernel == "scanline":
        basic, linear, quad = scanline_coeffs(conic[:, None, :], dx, dy)
        i = SCAN_I.astype(dtype)
        expo = basic[..., None] + linear[..., None] * i + quad[..., None] * (i * i)
        if counter is not None:
            counter.charge(
                n_scan * (OPS_BASIC + OPS_LINEAR + OPS_QUAD)
                + n_scan * PIXELS_PER_LANE * OPS_PER_PIXEL_SCANLINE,
                scanlines=n_scan,
            )
    elif kernel == "naive":
        dyi = dy[..., None] - SCAN_I.astype(dtype)  # (P, 32, 4)
        expo = -0.5 * (
            conic[:, None, None, 0] * dx[..., None] ** 2
            + 2.0 * conic[:, None, None, 1] * dx[..., None] * dyi
            + conic[:, None, None, 2] * dyi**2
        )
        if counter is not None:
            counter.charge(n_scan * PIXELS_PER_LANE * OPS_PER_PIXEL_NAIVE, scanlines=n_scan)
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    return np.exp(expo)


def blend_tile(tile: TileWorkload, projected: ProjectedScene, config: RasterConfig,
               resolution, counter: OpCounter | None = None):
    """Composite one tile. Returns (rgb (32,4,3), T (32,4), frags (32,4), valid mask)."""
    dtype = config.np_dtype
    px, py0, valid = _lane_pixels(tile.origin, resolution, dtype)
    bg = np.asarray(config.background, dtype=dtype)
    prim = tile.primitives
    if prim.size == 0:
        rgb = np.broadcast_to(bg, (px.size, PIXELS_PER_LANE, 3)).copy()
        return rgb, np.ones((px.size, PIXELS_PER_LANE), dtype=dtype), \
            np.zeros((px.size, PIXELS_PER_LANE), dtype=np.int32), valid

    G = _tile_G(projected, prim, px, py0, dtype, config.kernel, counter)
    opacity = projected.opacity[prim].astype(dtype)
    color = projected.color[prim].astype(dtype)

    alpha = np.minimum(opacity[:, None, None] * G, dtype(config.alpha_max))
    usable = (alpha >= dtype(config.alpha_min)) & valid
    alpha_eff = np.where(usable, alpha, dtype(0.0))

    one_minus = dtype(1.0) - alpha_eff
    T_after = np.cumprod(one_minus, axis=0)
    T_before = np.concatenate([np.ones((1,) + T_after.shape[1:], dtype=dtype), T_after[:-1]], axis=0)
    active = T_before >= dtype(config.t_stop)   # prefix along depth: T is non-increasing

    w = np.where(active, T_before * alpha_eff, dtype(0.0))
    rgb = np.einsum("plk,pc->lkc", w, color, optimize=False).astype(dtype)
    T_final = np.prod(np.where(active, one_minus, dtype(1.0)), axis=0)
    rgb += T_final[..., None] * bg
    frags = (active & (alpha_eff > 0)).sum(axis=0, dtype=np.int32)
    return rgb, T_final, frags, valid


def half_path_blend(tile: TileWorkload, projected: ProjectedScene, config: RasterConfig,
                    resolution):
    """Scanline compositing with binary16 blending state.

    The exponent is evaluated in float32 (it never lives in the blending
    registers); G, alpha, T, color and every accumulation round to
    float16 step by step. Output is upcast for assembly into the image.
    """
    half = np.float16
    px, py0, valid = _lane_pixels(tile.origin, resolution, np.float32)
    bg = np.asarray(config.background, dtype=half)
    prim = tile.primitives
    if prim.size == 0:
        rgb = np.broadcast_to(bg, (px.size, PIXELS_PER_LANE, 3)).copy()
        return rgb.astype(np.float32), np.ones((px.size, PIXELS_PER_LANE), dtype=np.float32), \
            np.zeros((px.size, PIXELS_PER_LANE), dtype=np.int32), valid

    G = _tile_G(projected, prim, px, py0, np.float32, "scanline", None).astype(half)
    opacity = projected.opacity[prim].astype(half)
    color = projected.color[prim].astype(half)

    alpha = np.minimum(opacity[:, None, None] * G, half(config.alpha_max))
    usable = (alpha >= half(config.alpha_min)) & valid
    alpha_eff = np.where(usable, alpha, half(0.0))

    one_minus = half(1.0) - alpha_eff
    T_after = np.cumprod(one_minus, axis=0)
    T_before = np.concatenate([np.ones((1,) + T_after.shape[1:], dtype=half), T_after[:-1]], axis=0)
    active = T_before >= half(config.t_stop)

    w = np.where(active, T_before * alpha_eff, half(0.0))
    contrib = w[..., None] * color[:, None, None, :]
    rgb = np.add.reduce(contrib, axis=0, dtype=half)
    T_final = np.prod(np.where(active, one_minus, half(1.0)), axis=0)
    rgb = rgb + T_final[..., None] * bg
    frags = (active & (alpha_eff > 0)).sum(axis=0, dtype=np.int32)
    return rgb.astype(np.float32), T_final.astype(np.float32), frags, valid


def _tile_block(lane_array):
    """(32, 4, ...) lane-major data to an (8, 16, ...) pixel block."""
    a = lane_array.reshape((2, 16, PIXELS_PER_LANE) + lane_array.shape[2:])
    a = np.moveaxis(a, 2, 1)  # (2, 4, 16, ...)
    return a.reshape((TILE_H, TILE_W) + lane_array.shape[2:])


def _assemble(tiles_out, tiles, resolution, config, half: bool):
    W, H = resolution
    out_dtype = np.float32 if half else config.np_dtype
    color = np.empty((H, W, 3), dtype=out_dtype)
    bg = np.asarray(config.background, dtype=out_dtype)
    color[:] = bg
    T = np.ones((H, W), dtype=out_dtype)
    frags = np.zeros((H, W), dtype=np.int32)
    for tile, (rgb, t_final, fr, _valid) in zip(tiles, tiles_out):
        x0, y0 = tile.origin
        ky = min(TILE_H, H - y0)
        kx = min(TILE_W, W - x0)
        color[y0:y0 + ky, x0:x0 + kx] = _tile_block(rgb)[:ky, :kx]
        T[y0:y0 + ky, x0:x0 + kx] = _tile_block(t_final)[:ky, :kx]
        frags[y0:y0 + ky, x0:x0 + kx] = _tile_block(fr)[:ky, :kx]
    return RenderOutput(color=color, transmittance=T, frag_count=frags)


def forward(scene: SceneSoA, camera: CameraView, config: RasterConfig | None = None,
            counter: OpCounter | None = None, half: bool = False):
    """Render a scene and keep the context needed for a backward pass.

    Pipeline: project everything, cull whole clusters, compact the
    survivors contiguously, bin them into tiles, composite each tile.
    Deterministic: identical inputs give bit-identical images.
    """
    from .ccc import build_clusters, cluster_visibility, compact_arrays

    config = config or RasterConfig()
    projected_full = project_scene(scene, camera, dtype=config.np_dtype, low_pass=config.low_pass)

    n = scene.n
    n_clusters = 0
    visible_clusters = culled_clusters = 0
    if config.use_culling and n > 0:
        index = build_clusters(scene)
        n_clusters = index.n_clusters
        frustum = build_frustum(camera)
        cluster_mask = cluster_visibility(index, frustum, projected_full.in_image)
        visible_clusters = int(cluster_mask.sum())
        culled_clusters = n_clusters - visible_clusters
        projected, compact_map = compact_arrays(projected_full, cluster_mask, index.cluster_size, n)
    else:
        from .ccc import cluster_count
        n_clusters = cluster_count(n)
        projected, compact_map = projected_full, np.arange(n, dtype=np.int64)
        visible_clusters = n_clusters

    tiles = bin_tiles(projected.xy, projected.depth, projected.radius,
                      projected.in_image, camera.resolution)

    blend = half_path_blend if half else blend_tile
    if half:
        tiles_out = [blend(t, projected, config, camera.resolution) for t in tiles]
    else:
        tiles_out = [blend(t, projected, config, camera.resolution, counter) for t in tiles]
    output = _assemble(tiles_out, tiles, camera.resolution, config, half)

    ctx = RenderContext(
        generation=scene.generation, camera=camera, config=config,
        projected=projected, compact_map=compact_map, n_total=n,
        n_clusters=n_clusters, tiles=tiles,
        visible_clusters=visible_clusters, culled_clusters=culled_clusters,
    )
    return output, ctx


def render(scene: SceneSoA, camera: CameraView, config: RasterConfig | None = None) -> RenderOutput:
    return forward(scene, camera, config)[0]
