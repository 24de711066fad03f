"""Adaptive density control.

The growth signal is the dispersion of the per-fragment opacity gradient:
for each primitive, score = S - M^2/C (count times variance). Consistent
gradients across observing pixels mean the optimizer just hasn't
converged; conflicting ones mean a single primitive can't represent the
local geometry and should split (if large) or clone (if small). Opacity
is periodically decayed by a factor instead of hard-reset, which
re-weights the scene while letting it recover quickly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backward import DensifyStats
from .ccc import morton_sort
from .scene import SceneSoA, logit, quat_to_rotmat, sigmoid

OPACITY_FLOOR = 1e-4  # keeps the logit finite under repeated decay


@dataclass
class DensifyConfig:
    start_epoch: int = 3
    densify_interval_epochs: int = 5
    decay_interval_epochs: int = 10
    decay_factor: float = 0.5
    decay_active_fraction: float = 0.8
    budget: int = 0                      # target primitive count (0: frozen)
    prune_opacity: float = 0.005
    split_scale_threshold: float | None = None  # None: 1% of scene AABB diagonal
    metric: str = "variance"             # "variance" | "position_grad" (ablation arm)
    opacity_control: str = "decay"       # "decay" | "hard_reset" (ablation arm)
    hard_reset_opacity: float = 0.01

    def resolve_split_threshold(self, scene: SceneSoA) -> float:
        if self.split_scale_threshold is not None:
            return self.split_scale_threshold
        lo, hi = scene.bounds()
        return 0.01 * float(np.linalg.norm(hi - lo))


@dataclass
class DensifyLogRow:
    epoch: int
    n_before: int
    n_after: int
    n_split: int
    n_clone: int
    n_pruned: int
    max_score: float
    mean_score: float


def variance_score(stats: DensifyStats) -> np.ndarray:
    """score_i = S_i - M_i^2 / C_i for C_i > 0, floored at zero."""
    c = stats.C.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = stats.S - np.where(c > 0, stats.M**2 / np.where(c > 0, c, 1.0), 0.0)
    score = np.where(c > 0, score, 0.0)
    return np.maximum(score, 0.0)


def select_and_grow(scene: SceneSoA, scores, budget: int, split_threshold: float):
    """Pick the top-scoring primitives up to the budget headroom.

    Returns (clone_indices, split_indices); candidates need a strictly
    positive score, split when the largest world scale exceeds the
    threshold, ties broken by index.
    """
    n = scene.n
    k = min(max(budget - n, 0), n)
    scores = np.asarray(scores, dtype=np.float64)
    if k == 0 or not np.any(scores > 0):
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    order = np.lexsort((np.arange(n), -scores))  # score desc, index asc
    candidates = order[: k]
    candidates = candidates[scores[candidates] > 0]
    max_scale = scene.scales().max(axis=1)
    split_mask = max_scale[candidates] > split_threshold
    return np.sort(candidates[~split_mask]), np.sort(candidates[split_mask])


def split_offsets(scene: SceneSoA, idx):
    """Children positions: +-0.5 sigma_max along each parent's principal axis."""
    scales = scene.scales()[idx]
    quat = scene.unit_rotations()[idx]
    R = quat_to_rotmat(quat)
    k = np.argmax(scales, axis=1)
    axis = R[np.arange(len(idx)), :, k]       # principal axis (column of R)
    return 0.5 * scales[np.arange(len(idx)), k][:, None] * axis


SPLIT_SCALE_SHRINK = 1.6


def apply_growth(scene: SceneSoA, clone_idx, split_idx):
    """Append clones and split children, then drop the split parents.

    Clones are exact copies (children separate under later gradients).
    Split children inherit rotation/color/opacity, shrink scales by 1.6
    and sit at +-0.5 sigma_max along the principal axis.
    """
    clone_idx = np.asarray(clone_idx, dtype=np.int64)
    split_idx = np.asarray(split_idx, dtype=np.int64)
    new = {name: [] for name in ("position", "log_scale", "rotation", "color", "opacity_logit")}

    if clone_idx.size:
        new["position"].append(scene.position[clone_idx])
        new["log_scale"].append(scene.log_scale[clone_idx])
        new["rotation"].append(scene.rotation[clone_idx])
        new["color"].append(scene.color[clone_idx])
        new["opacity_logit"].append(scene.opacity_logit[clone_idx])

    if split_idx.size:
        off = split_offsets(scene, split_idx)
        child_ls = scene.log_scale[split_idx] - np.log(SPLIT_SCALE_SHRINK)
        for sign in (+1.0, -1.0):
            new["position"].append(scene.position[split_idx] + sign * off)
            new["log_scale"].append(child_ls)
            new["rotation"].append(scene.rotation[split_idx])
            new["color"].append(scene.color[split_idx])
            new["opacity_logit"].append(scene.opacity_logit[split_idx])

    if new["position"]:
        scene.append_raw(*[np.concatenate(new[k]) for k in
                           ("position", "log_scale", "rotation", "color", "opacity_logit")])
    if split_idx.size:
        keep = np.ones(scene.n, dtype=bool)
        keep[split_idx] = False
        scene.keep(keep)


def opacity_decay(scene: SceneSoA, factor: float):
    """Multiply every post-activation opacity by `factor` (floored)."""
    if not (0.0 < factor < 1.0):
        raise ValueError(f"decay factor must be in (0, 1), got {factor}")
    o = sigmoid(scene.opacity_logit)
    scene.opacity_logit[:] = logit(np.maximum(factor * o, OPACITY_FLOOR))


def opacity_hard_reset(scene: SceneSoA, value: float):
    """Classic reset: clamp opacities down to `value`."""
    o = sigmoid(scene.opacity_logit)
    scene.opacity_logit[:] = logit(np.minimum(o, value))


def prune(scene: SceneSoA, threshold: float) -> int:
    """Drop primitives with activated opacity below the threshold."""
    keep = sigmoid(scene.opacity_logit) >= threshold
    n_pruned = int(np.count_nonzero(~keep))
    if n_pruned:
        scene.keep(keep)
    return n_pruned


def densify_step(scene: SceneSoA, stats: DensifyStats, config: DensifyConfig,
                 epoch: int, alt_scores=None) -> DensifyLogRow | None:
    """One scheduled density-control step; no-op off schedule.

    Flow: score -> select -> grow -> prune -> reset statistics -> resort.
    `alt_scores` feeds the ablation metric when config.metric != variance.
    """
    if epoch < config.start_epoch or epoch % config.densify_interval_epochs != 0:
        return None
    n_before = scene.n
    if config.metric == "variance":
        scores = variance_score(stats)
    else:
        scores = np.zeros(n_before) if alt_scores is None else np.asarray(alt_scores, dtype=np.float64)
    threshold = config.resolve_split_threshold(scene)
    clone_idx, split_idx = select_and_grow(scene, scores, config.budget, threshold)
    max_score = float(scores.max()) if n_before else 0.0
    mean_score = float(scores.mean()) if n_before else 0.0
    apply_growth(scene, clone_idx, split_idx)
    n_pruned = prune(scene, config.prune_opacity)
    stats_now = DensifyStats.from_scene(scene)
    stats_now.reset()
    morton_sort(scene)
    return DensifyLogRow(
        epoch=epoch, n_before=n_before, n_after=scene.n,
        n_split=int(split_idx.size), n_clone=int(clone_idx.size),
        n_pruned=n_pruned, max_score=max_score, mean_score=mean_score,
    )


def decay_scheduled(epoch: int, total_epochs: int, config: DensifyConfig) -> bool:
    return (
        epoch % config.decay_interval_epochs == 0
        and epoch <= config.decay_active_fraction * total_epochs
    )
