"""Adam with cluster-sparse updates.

Moments live in per-primitive arrays registered as scene extras, so
Morton resorts and densification edits carry them along. Updates touch
only the contiguous blocks of clusters flagged by the update mask;
skipped clusters keep their moments untouched (no decay) and their step
counters frozen. Step counts are tracked per primitive - members of one
cluster share increments between restructurings, and the counts survive
permutations exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ccc import CLUSTER_SIZE
from .scene import RAW_CHANNELS, SceneSoA

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-15


@dataclass
class LearningRates:
    position: float = 1.6e-4         # multiplied by the scene radius at train time
    position_final: float = 1.6e-6   # exponential decay target over the run
    log_scale: float = 5e-3
    rotation: float = 1e-3
    color: float = 2.5e-3
    opacity_logit: float = 5e-2

    def at(self, progress: float, position_scale: float = 1.0) -> dict:
        """Per-channel rates at training progress in [0, 1]."""
        progress = min(max(progress, 0.0), 1.0)
        pos = self.position * (self.position_final / self.position) ** progress
        return {
            "position": pos * position_scale,
            "log_scale": self.log_scale,
            "rotation": self.rotation,
            "color": self.color,
            "opacity_logit": self.opacity_logit,
        }


class AdamState:
    """First/second moments per raw channel plus per-primitive step counts."""

    def __init__(self, scene: SceneSoA):
        for name in RAW_CHANNELS:
            shape = getattr(scene, name).shape
            scene.register_extra(f"adam_m_{name}", np.zeros(shape))
            scene.register_extra(f"adam_v_{name}", np.zeros(shape))
        scene.register_extra("adam_step", np.zeros(scene.n, dtype=np.int64))
        self.scene = scene

    def m(self, name):
        return self.scene.extras[f"adam_m_{name}"]

    def v(self, name):
        return self.scene.extras[f"adam_v_{name}"]

    @property
    def step(self):
        return self.scene.extras["adam_step"]


def adam_step(scene: SceneSoA, grads, state: AdamState, cluster_mask, lrs: dict,
              cluster_size: int = CLUSTER_SIZE):
    """One sparse Adam update confined to true-masked clusters."""
    n = scene.n
    if n == 0:
        return
    cluster_of = np.arange(n) // cluster_size
    rows = np.asarray(cluster_mask, dtype=bool)[cluster_of]
    if not rows.any():
        return
    state.step[rows] += 1
    t = state.step[rows].astype(np.float64)
    bc1 = 1.0 - BETA1**t
    bc2 = 1.0 - BETA2**t

    grads = grads.as_dict() if hasattr(grads, "as_dict") else grads
    for name in RAW_CHANNELS:
        g = np.asarray(grads[name], dtype=np.float64)[rows]
        m = state.m(name)
        v = state.v(name)
        m[rows] = BETA1 * m[rows] + (1.0 - BETA1) * g
        v[rows] = BETA2 * v[rows] + (1.0 - BETA2) * g * g
        if g.ndim == 2:
            m_hat = m[rows] / bc1[:, None]
            v_hat = v[rows] / bc2[:, None]
        else:
            m_hat = m[rows] / bc1
            v_hat = v[rows] / bc2
        param = getattr(scene, name)
        param[rows] -= lrs[name] * m_hat / (np.sqrt(v_hat) + EPS)
