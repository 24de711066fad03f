import numpy as np

from tinysplat.forward import (OpCounter, RasterConfig, forward, gaussian_direct,
                               half_path_blend, render, scanline_coeffs)
from tinysplat.metrics import psnr
from tinysplat.scene import SceneSoA
from tinysplat.tiles import TileWorkload

from conftest import make_camera, make_scene


def test_scanline_coeffs_at_center():
    basic, linear, quad = scanline_coeffs(np.array([1.0, 0.0, 1.0]), 0.0, 0.0)
    assert (basic, linear, quad) == (0.0, 0.0, -0.5)


def test_scanline_coeffs_peak_recovery():
    basic, linear, quad = scanline_coeffs(np.array([1.0, 0.0, 1.0]), 0.0, 2.0)
    assert (basic, linear, quad) == (-2.0, 2.0, -0.5)
    i = 2
    assert np.exp(basic + linear * i + quad * i * i) == 1.0


def test_scanline_matches_direct_eval(rng):
    # oracle: evaluate the quadratic form at the shifted offset directly
    for _ in range(300):
        a = rng.uniform(0.05, 2.0)
        c = rng.uniform(0.05, 2.0)
        b = rng.uniform(-0.9, 0.9) * np.sqrt(a * c)
        conic = np.array([a, b, c])
        dx, dy = rng.uniform(-6, 6, 2)
        basic, linear, quad = scanline_coeffs(conic, dx, dy)
        for i in range(9):
            got = np.exp(basic + linear * i + quad * i * i)
            ref = gaussian_direct(conic, dx, dy - i)
            assert abs(got - ref) <= 1e-6 * abs(ref) + 1e-300


def _projected_single(xy, conic, color, opacity, depth=1.0):
    """Hand-built projection record for blend-level tests."""
    class P:
        pass
    p = P()
    n = len(xy)
    p.xy = np.asarray(xy, dtype=np.float64)
    p.conic = np.asarray(conic, dtype=np.float64)
    p.color = np.asarray(color, dtype=np.float64)
    p.opacity = np.asarray(opacity, dtype=np.float64)
    p.depth = np.full(n, depth)
    p.radius = np.full(n, 100.0)
    p.in_image = np.ones(n, bool)
    p.valid = np.ones(n, bool)
    return p


def test_blend_empty_tile_is_background():
    from tinysplat.forward import blend_tile
    cfg = RasterConfig(background=(0.2, 0.4, 0.6))
    tile = TileWorkload(0, 0, (0, 0), np.zeros(0, dtype=np.int64))
    rgb, T, frags, _ = blend_tile(tile, _projected_single(np.zeros((0, 2)), np.zeros((0, 3)),
                                                          np.zeros((0, 3)), np.zeros(0)),
                                  cfg, (16, 8))
    assert np.all(T == 1.0)
    assert frags.sum() == 0
    np.testing.assert_allclose(rgb[..., 0], 0.2, atol=1e-7)
    np.testing.assert_allclose(rgb[..., 2], 0.6, atol=1e-7)


def test_blend_saturated_alpha_clamps():
    from tinysplat.forward import blend_tile
    cfg = RasterConfig(dtype="float64", background=(1.0, 1.0, 1.0))
    proj = _projected_single([[5.0, 3.0]], [[0.5, 0.0, 0.5]], [[0.25, 0.5, 0.75]], [1.0])
    tile = TileWorkload(0, 0, (0, 0), np.array([0]))
    rgb, T, frags, _ = blend_tile(tile, proj, cfg, (16, 8))
    # center pixel (5, 3): alpha pre-clamp == 1 -> alpha_max * c + (1-alpha_max) * bg
    center = rgb.reshape(2, 16, 4, 3)[0, 5, 3]
    expect = cfg.alpha_max * np.array([0.25, 0.5, 0.75]) + (1 - cfg.alpha_max) * 1.0
    np.testing.assert_allclose(center, expect, rtol=1e-12)


def test_blend_two_identical_half_alpha():
    from tinysplat.forward import blend_tile
    cfg = RasterConfig(dtype="float64")
    proj = _projected_single([[5.0, 3.0]] * 2, [[0.5, 0.0, 0.5]] * 2,
                             [[1.0, 0.8, 0.6]] * 2, [0.5, 0.5])
    tile = TileWorkload(0, 0, (0, 0), np.array([0, 1]))
    rgb, T, frags, _ = blend_tile(tile, proj, cfg, (16, 8))
    center = rgb.reshape(2, 16, 4, 3)[0, 5, 3]
    np.testing.assert_allclose(center, 0.75 * np.array([1.0, 0.8, 0.6]), rtol=1e-12)
    assert frags.reshape(2, 16, 4)[0, 5, 3] == 2


def test_transmittance_product_invariant(rng):
    scene = make_scene(24, rng)
    cam = make_camera((48, 40))
    out, ctx = forward(scene, cam, RasterConfig())
    # recompute per-pixel product of (1 - alpha) over blended fragments, fp64
    cfg64 = RasterConfig(dtype="float64")
    out64, _ = forward(scene, cam, cfg64)
    assert np.abs(out.transmittance - out64.transmittance).max() < 1e-5


def test_render_empty_scene_is_background():
    cam = make_camera((33, 21))  # deliberately not tile-aligned
    out = render(SceneSoA.empty(), cam, RasterConfig(background=(0.1, 0.2, 0.3)))
    assert out.color.shape == (21, 33, 3)
    np.testing.assert_allclose(out.color[..., 1], 0.2, atol=1e-7)
    assert out.frag_count.sum() == 0


def test_render_deterministic(rng):
    scene = make_scene(40, rng)
    cam = make_camera((64, 48))
    a = render(scene, cam, RasterConfig())
    b = render(scene, cam, RasterConfig())
    np.testing.assert_array_equal(a.color, b.color)
    np.testing.assert_array_equal(a.transmittance, b.transmittance)


def test_render_culling_disabled_oracle(rng):
    scene = make_scene(64, rng, extent=1.5)  # some land outside the view
    cam = make_camera((64, 64), eye=(0.2, 0.4, -2.2))
    on = render(scene, cam, RasterConfig(use_culling=True))
    off = render(scene, cam, RasterConfig(use_culling=False))
    np.testing.assert_array_equal(on.color, off.color)
    np.testing.assert_array_equal(on.frag_count, off.frag_count)


def test_render_scanline_vs_naive(rng):
    scene = make_scene(48, rng)
    cam = make_camera((64, 64))
    a = render(scene, cam, RasterConfig(kernel="scanline"))
    b = render(scene, cam, RasterConfig(kernel="naive"))
    assert np.abs(a.color - b.color).max() <= 1e-5


def test_render_shuffle_invariance(rng):
    scene = make_scene(32, rng)
    cam = make_camera((48, 48))
    a = render(scene, cam, RasterConfig())
    perm = rng.permutation(32)
    scene.permute(perm)
    b = render(scene, cam, RasterConfig())
    np.testing.assert_array_equal(a.color, b.color)


def test_early_termination_bounded_by_t_stop(rng):
    # stopping early changes any pixel by at most t_stop
    scene = make_scene(64, rng, opacity_range=(2.0, 4.0))  # dense, opaque
    cam = make_camera((48, 48))
    full = render(scene, cam, RasterConfig(dtype="float64", t_stop=0.0))
    cut = render(scene, cam, RasterConfig(dtype="float64", t_stop=1e-4))
    assert np.abs(full.color - cut.color).max() <= 1e-4 + 1e-12


def test_op_counter_scanline_vs_naive(rng):
    scene = make_scene(16, rng)
    cam = make_camera((32, 32))
    counter = OpCounter()
    render_cfg = RasterConfig(kernel="scanline", t_stop=0.0)
    forward(scene, cam, render_cfg, counter=counter)
    assert counter.primitive_scanlines > 0
    assert counter.ops == counter.primitive_scanlines * 19
    naive = OpCounter()
    forward(scene, cam, RasterConfig(kernel="naive", t_stop=0.0), counter=naive)
    assert naive.primitive_scanlines == counter.primitive_scanlines
    assert naive.ops == naive.primitive_scanlines * 36


def test_half_path_empty_tile_matches_fp32():
    cfg = RasterConfig(background=(0.25, 0.5, 0.125))  # fp16-exact values
    tile = TileWorkload(0, 0, (0, 0), np.zeros(0, dtype=np.int64))
    proj = _projected_single(np.zeros((0, 2)), np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))
    rgb_h, T_h, _, _ = half_path_blend(tile, proj, cfg, (16, 8))
    from tinysplat.forward import blend_tile
    rgb_f, T_f, _, _ = blend_tile(tile, proj, cfg, (16, 8))
    np.testing.assert_array_equal(rgb_h, rgb_f)
    np.testing.assert_array_equal(T_h, T_f)


def test_half_path_single_fragment_transmittance():
    cfg = RasterConfig(dtype="float64")
    proj = _projected_single([[5.0, 3.0]], [[0.5, 0.0, 0.5]], [[1.0, 1.0, 1.0]], [0.5])
    tile = TileWorkload(0, 0, (0, 0), np.array([0]))
    _, T, _, _ = half_path_blend(tile, proj, cfg, (16, 8))
    assert T.reshape(2, 16, 4)[0, 5, 3] == np.float32(np.float16(0.5))


def test_half_path_full_scene_psnr(rng):
    scene = make_scene(48, rng)
    cam = make_camera((64, 64))
    full, ctx = forward(scene, cam, RasterConfig())
    halfed, _ = forward(scene, cam, RasterConfig(), half=True)
    p = psnr(full.color.astype(np.float64), halfed.color.astype(np.float64))
    assert p >= 40.0


def test_partial_edge_tiles(rng):
    # resolutions not divisible by 16x8 must not read or write out of range
    scene = make_scene(24, rng)
    cam = make_camera((50, 35))
    out = render(scene, cam, RasterConfig())
    assert out.color.shape == (35, 50, 3)
    assert np.isfinite(out.color).all()
