"""tinysplat: a CPU trainer and renderer for 3D Gaussian scenes.

Differentiable tile rasterization with a scanline kernel and lane-group
gradient reductions, Z-order cluster culling with compaction and sparse
optimizer updates, and opacity-gradient-variance density control.
"""
from .backward import BackwardResult, DensifyStats, SceneGrads, backward, backward_reference
from .camera import CameraView, load_camera, save_camera
from .densify import DensifyConfig, densify_step, opacity_decay, prune, variance_score
from .forward import OpCounter, RasterConfig, RenderOutput, forward, half_path_blend, render
from .metrics import loss_and_grad, psnr, ssim
from .projection import Frustum, build_frustum, project_covariance, project_point
from .scene import GaussianPrimitive, SceneSoA, activate, compose_cov3d, load_ply, save_ply
from .train import TrainConfig, TrainResult, train

__all__ = [
    "BackwardResult", "DensifyStats", "SceneGrads", "backward", "backward_reference",
    "CameraView", "load_camera", "save_camera",
    "DensifyConfig", "densify_step", "opacity_decay", "prune", "variance_score",
    "OpCounter", "RasterConfig", "RenderOutput", "forward", "half_path_blend", "render",
    "loss_and_grad", "psnr", "ssim",
    "Frustum", "build_frustum", "project_covariance", "project_point",
    "GaussianPrimitive", "SceneSoA", "activate", "compose_cov3d", "load_ply", "save_ply",
    "TrainConfig", "TrainResult", "train",
]

__version__ = "0.1.0"
