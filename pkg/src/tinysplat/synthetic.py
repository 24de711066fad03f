"""Seeded synthetic scenes: ground-truth Gaussians, a camera ring, and
target images rendered by the float64 reference path.

Everything emitted is self-consistent by construction: raw parameters are
rounded through float32 (the PLY storage type) before any rendering, and
targets are produced from the exact state that lands on disk, so a
re-render from the emitted files reproduces the targets bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import CameraView, look_at, save_camera
from .forward import RasterConfig, render
from .images import save_image
from .scene import SceneSoA, logit, save_ply


@dataclass
class SyntheticSceneSpec:
    n_gaussians: int = 512
    scene_extent: float = 1.0
    n_views: int = 8
    view_resolution: tuple = (128, 128)
    seed: int = 0
    target_kind: str = "random_gaussians"  # or "two_tone_board"

    def __post_init__(self):
        if self.n_views < 1:
            raise ValueError("need n_views >= 1")
        if min(self.view_resolution) < 16:
            raise ValueError("resolution must be at least 16x16")


def _round_f32(scene: SceneSoA) -> SceneSoA:
    return SceneSoA(*[getattr(scene, ch).astype(np.float32).astype(np.float64)
                      for ch in ("position", "log_scale", "rotation", "color", "opacity_logit")])


def random_scene(spec: SyntheticSceneSpec) -> SceneSoA:
    rng = np.random.default_rng(spec.seed)
    n = spec.n_gaussians
    ext = spec.scene_extent
    position = rng.uniform(-ext, ext, size=(n, 3))
    log_scale = np.log(rng.uniform(0.04, 0.16, size=(n, 3)) * ext)
    rotation = rng.normal(size=(n, 4))
    color = rng.uniform(-1.5, 1.5, size=(n, 3))
    opacity_logit = rng.uniform(-0.5, 2.0, size=n)
    return _round_f32(SceneSoA(position, log_scale, rotation, color, opacity_logit))


def two_tone_board(spec: SyntheticSceneSpec) -> SceneSoA:
    """A flat checkered slab: small Gaussians on a grid with two colors."""
    rng = np.random.default_rng(spec.seed)
    side = max(int(np.sqrt(spec.n_gaussians)), 2)
    ext = spec.scene_extent
    g = np.linspace(-ext, ext, side)
    xx, yy = np.meshgrid(g, g)
    n = side * side
    position = np.stack([xx.ravel(), yy.ravel(), rng.normal(0, 0.01 * ext, n)], axis=1)
    log_scale = np.full((n, 3), np.log(1.2 * ext / side))
    rotation = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    checker = ((xx.ravel() // (ext / 2)) + (yy.ravel() // (ext / 2))).astype(int) % 2
    tone = np.where(checker[:, None] == 0, logit(0.85), logit(0.15))
    color = np.broadcast_to(tone, (n, 3)).copy()
    opacity_logit = np.full(n, logit(0.9))
    return _round_f32(SceneSoA(position, log_scale, rotation, color, opacity_logit))


def camera_ring(spec: SyntheticSceneSpec, center=(0.0, 0.0, 0.0)) -> list:
    """Cameras evenly spaced on a ring, all aimed at `center`."""
    W, H = spec.view_resolution
    focal = 1.1 * max(W, H)
    radius = 3.2 * spec.scene_extent
    cams = []
    for k in range(spec.n_views):
        ang = 2.0 * np.pi * k / spec.n_views
        eye = np.array(center) + radius * np.array([np.sin(ang), 0.35, np.cos(ang)])
        cams.append(CameraView(
            world_to_camera=look_at(eye, center),
            focal=(focal, focal),
            principal_point=((W - 1) / 2.0, (H - 1) / 2.0),
            resolution=(W, H),
            near=0.05 * spec.scene_extent,
            far=20.0 * spec.scene_extent,
        ))
    return cams


REFERENCE_RASTER = RasterConfig(dtype="float64")


def make_synthetic(spec: SyntheticSceneSpec, out_dir) -> dict:
    """Emit ground-truth PLY, camera files and float64-rendered targets.

    Returns {"scene": ..., "cameras": [...], "targets": [...]} with paths
    under out_dir: scene.ply, cam_000.txt ..., target_000.png ...
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = two_tone_board(spec) if spec.target_kind == "two_tone_board" else random_scene(spec)
    cameras = camera_ring(spec)

    scene_path = out / "scene.ply"
    save_ply(scene, scene_path)
    cam_paths, target_paths, targets = [], [], []
    for k, cam in enumerate(cameras):
        cam_path = out / f"cam_{k:03d}.txt"
        save_camera(cam, cam_path)
        img = render(scene, cam, REFERENCE_RASTER).color
        tgt_path = out / f"target_{k:03d}.png"
        save_image(img, tgt_path)
        cam_paths.append(cam_path)
        target_paths.append(tgt_path)
        targets.append(img)
    return {"scene": scene_path, "cameras": cam_paths, "targets": target_paths,
            "images": targets}
