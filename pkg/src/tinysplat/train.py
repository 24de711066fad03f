"""The optimization loop.

One epoch is one seeded-shuffled pass over the training views. Each step
renders, evaluates the loss, runs the backward pass and applies a
cluster-sparse Adam update. End-of-epoch hooks fire in a fixed order:
density control (self-gated on its schedule), opacity decay (every
decay interval inside the active fraction of training), and a Morton
resort every resort interval. Checkpoints are a scene PLY, a metrics
CSV, a density-control CSV and a manifest of the resolved config.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backward import BackwardResult, DensifyStats, backward
from .ccc import morton_sort
from .densify import DensifyConfig, decay_scheduled, densify_step, opacity_decay, \
    opacity_hard_reset
from .errors import TrainingDiverged
from .forward import RasterConfig, forward
from .metrics import loss_and_grad, psnr
from .optim import AdamState, LearningRates, adam_step
from .scene import SceneSoA, save_ply


@dataclass
class TrainConfig:
    epochs: int = 60
    lrs: LearningRates = field(default_factory=LearningRates)
    loss_lambda: float = 0.2
    resort_interval_epochs: int = 5
    densify: DensifyConfig = field(default_factory=DensifyConfig)
    raster: RasterConfig = field(default_factory=RasterConfig)
    seed: int = 0
    deterministic: bool = True   # pins tile order and zeroes wall-clock in the CSV


@dataclass
class EpochRow:
    epoch: int
    loss: float
    psnr: float
    n_primitives: int
    visible_clusters: float
    culled_clusters: float
    wall_time: float


@dataclass
class TrainResult:
    scene: SceneSoA
    metrics: list
    densify_log: list


def train(config: TrainConfig, scene: SceneSoA, views) -> TrainResult:
    """Fit `scene` to `views` (a list of (CameraView, target image) pairs).

    The scene is modified in place and also returned. Raises
    TrainingDiverged on a non-finite loss.
    """
    if not views:
        raise ValueError("need at least one training view")
    if scene.n == 0:
        raise ValueError("cannot train an empty scene")
    if config.densify.budget and config.densify.budget < scene.n:
        raise ValueError("budget below initial primitive count")
    if config.epochs == 0:
        return TrainResult(scene=scene, metrics=[], densify_log=[])

    state = AdamState(scene)
    DensifyStats.zeros(scene.n).attach(scene)
    if config.densify.metric == "position_grad":
        scene.register_extra("alt_score", np.zeros(scene.n))
    rng = np.random.default_rng(config.seed)
    morton_sort(scene)
    pos_scale = _scene_radius(views)

    metrics = []
    densify_log = []
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(views))
        epoch_loss = 0.0
        epoch_psnr = 0.0
        vis_sum = 0
        cull_sum = 0
        progress = (epoch - 1) / max(config.epochs - 1, 1)
        lrs = config.lrs.at(progress, position_scale=pos_scale)
        for view_i in order:
            camera, target = views[view_i]
            out, ctx = forward(scene, camera, config.raster)
            loss, dI = loss_and_grad(out.color, target, config.loss_lambda)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, int(view_i), loss)
            result: BackwardResult = backward(scene, ctx, dI)
            if config.densify.metric == "position_grad":
                _accumulate_position_score(scene, result)
            adam_step(scene, result.grads, state, result.cluster_mask, lrs)
            epoch_loss += loss
            epoch_psnr += psnr(out.color, target)
            vis_sum += ctx.visible_clusters
            cull_sum += ctx.culled_clusters

        if config.densify.budget:
            alt = scene.extras.get("alt_score")
            row = densify_step(scene, DensifyStats.from_scene(scene), config.densify,
                               epoch, alt_scores=alt)
            if row is not None:
                densify_log.append(row)
                if "alt_score" in scene.extras:
                    scene.extras["alt_score"][:] = 0.0
        if decay_scheduled(epoch, config.epochs, config.densify):
            if config.densify.opacity_control == "decay":
                opacity_decay(scene, config.densify.decay_factor)
            else:
                opacity_hard_reset(scene, config.densify.hard_reset_opacity)
        if epoch % config.resort_interval_epochs == 0:
            morton_sort(scene)

        wall = 0.0 if config.deterministic else time.perf_counter() - t0
        metrics.append(EpochRow(
            epoch=epoch,
            loss=epoch_loss / len(views),
            psnr=epoch_psnr / len(views),
            n_primitives=scene.n,
            visible_clusters=vis_sum / len(views),
            culled_clusters=cull_sum / len(views),
            wall_time=wall,
        ))
    return TrainResult(scene=scene, metrics=metrics, densify_log=densify_log)


def _scene_radius(views) -> float:
    """Radius of the camera rig, the usual scale for position step sizes."""
    centers = np.stack([cam.center for cam, _ in views])
    centroid = centers.mean(axis=0)
    r = float(np.linalg.norm(centers - centroid, axis=1).max())
    return max(r, 1.0)


def _accumulate_position_score(scene: SceneSoA, result: BackwardResult):
    """Ablation metric: accumulated screen-position gradient magnitude."""
    g = result.grads.position
    scene.extras["alt_score"] += np.linalg.norm(g, axis=1)


def write_metrics_csv(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss", "psnr", "n_primitives",
                    "visible_clusters", "culled_clusters", "wall_time"])
        for r in rows:
            w.writerow([r.epoch, repr(r.loss), repr(r.psnr), r.n_primitives,
                        repr(r.visible_clusters), repr(r.culled_clusters), repr(r.wall_time)])


def write_densify_csv(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "n_before", "n_after", "n_split", "n_clone",
                    "n_pruned", "max_score", "mean_score"])
        for r in rows:
            w.writerow([r.epoch, r.n_before, r.n_after, r.n_split, r.n_clone,
                        r.n_pruned, repr(r.max_score), repr(r.mean_score)])


def checkpoint(result: TrainResult, out_dir, manifest_text: str | None = None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_ply(result.scene, out / "scene.ply")
    write_metrics_csv(result.metrics, out / "metrics.csv")
    write_densify_csv(result.densify_log, out / "densify.csv")
    if manifest_text is not None:
        (out / "manifest.cfg").write_text(manifest_text)
    return out
