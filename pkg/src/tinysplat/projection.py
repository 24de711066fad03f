"""World -> screen projection of Gaussian primitives, and the view frustum.

Screen covariances follow the local-affine construction: the world
covariance is rotated into camera space and squashed through the pinhole
Jacobian at the primitive center, then a low-pass floor is added to the
diagonal so footprints never degenerate below a pixel. The stored "conic"
(a, b, c) is the upper triangle of the inverse screen covariance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraView
from .scene import SceneSoA, compose_cov3d

LOW_PASS_DEFAULT = 0.3   # px^2 added to the screen covariance diagonal
EXTENT_SIGMA = 3.0       # footprint radius in standard deviations

BEHIND_NEAR = "behind-near"


@dataclass
class Frustum:
    """Six inward-facing planes (unit normal n, offset d): inside iff n.x + d >= 0."""

    planes: np.ndarray  # (6, 4)

    def signed_distances(self, points) -> np.ndarray:
        points = np.atleast_2d(points)
        return points @ self.planes[:, :3].T + self.planes[:, 3]

    def contains(self, points) -> np.ndarray:
        return np.all(self.signed_distances(points) >= 0.0, axis=-1)


def build_frustum(camera: CameraView) -> Frustum:
    """Planes bounding the set of points imaged inside the pixel rectangle
    with depth in (near, far). Order: near, far, left, right, top, bottom."""
    R = camera.rotation
    C = camera.center
    fx, fy = camera.focal
    cx, cy = camera.principal_point
    W, H = camera.resolution

    cam_normals = [
        np.array([0.0, 0.0, 1.0]),          # near:  z >= near
        np.array([0.0, 0.0, -1.0]),         # far:   z <= far
        np.array([fx, 0.0, cx]),            # left:  u >= 0
        np.array([-fx, 0.0, (W - 1) - cx]), # right: u <= W-1
        np.array([0.0, fy, cy]),            # top:   v >= 0
        np.array([0.0, -fy, (H - 1) - cy]), # bottom: v <= H-1
    ]
    offsets_cam = [-camera.near, camera.far, 0.0, 0.0, 0.0, 0.0]

    planes = np.empty((6, 4))
    for i, (n_cam, off) in enumerate(zip(cam_normals, offsets_cam)):
        n_world = R.T @ n_cam
        # plane: n_cam . (R(x - C)) + off >= 0  =>  n_world . x + (off - n_world . C) >= 0
        d = off - n_world @ C
        norm = np.linalg.norm(n_world)
        planes[i, :3] = n_world / norm
        planes[i, 3] = d / norm
    return Frustum(planes)


def project_point(camera: CameraView, p):
    """Single-point pinhole projection.

    Returns ((u, v), depth) or the BEHIND_NEAR marker when the camera-space
    depth does not exceed the near plane.
    """
    t = camera.to_camera(np.asarray(p, dtype=np.float64))[0]
    if t[2] <= camera.near:
        return BEHIND_NEAR
    uv = camera.focal * t[:2] / t[2] + camera.principal_point
    return uv, float(t[2])


def project_covariance(camera: CameraView, cov_world, p, low_pass: float = LOW_PASS_DEFAULT):
    """Single-primitive screen footprint: ((a, b, c), radius_px).

    Returns None when the dilated screen covariance is numerically
    degenerate (non-positive determinant).
    """
    t = camera.to_camera(np.asarray(p, dtype=np.float64))[0]
    fx, fy = camera.focal
    J = np.array([
        [fx / t[2], 0.0, -fx * t[0] / t[2] ** 2],
        [0.0, fy / t[2], -fy * t[1] / t[2] ** 2],
    ])
    M = J @ camera.rotation
    S = M @ np.asarray(cov_world, dtype=np.float64) @ M.T
    sa, sb, sc = S[0, 0] + low_pass, S[0, 1], S[1, 1] + low_pass
    det = sa * sc - sb * sb
    if det <= 0:
        return None
    conic = np.array([sc / det, -sb / det, sa / det])
    mid = 0.5 * (sa + sc)
    lam_max = mid + np.sqrt(max(mid * mid - det, 0.0))
    radius = EXTENT_SIGMA * np.sqrt(lam_max)
    return conic, float(radius)


@dataclass
class ProjectedScene:
    """Per-primitive screen-space quantities plus the intermediates the
    backward pass chains through. All arrays have length N; entries where
    `valid` is False are unspecified."""

    xy: np.ndarray          # (N, 2)
    depth: np.ndarray       # (N,)
    conic: np.ndarray       # (N, 3) a, b, c
    radius: np.ndarray      # (N,)
    color: np.ndarray       # (N, 3) activated
    opacity: np.ndarray     # (N,)  activated
    valid: np.ndarray       # (N,) bool: in depth range, non-degenerate
    in_image: np.ndarray    # (N,) bool: valid and footprint disc meets the pixel rect
    # backward intermediates
    t_cam: np.ndarray       # (N, 3)
    M: np.ndarray           # (N, 2, 3) Jacobian @ rotation
    cov_screen: np.ndarray  # (N, 3) sa, sb, sc (dilated)
    cov_world: np.ndarray   # (N, 3, 3)
    scale: np.ndarray       # (N, 3)
    unit_quat: np.ndarray   # (N, 4)
    n_degenerate: int = 0


def project_scene(scene: SceneSoA, camera: CameraView, dtype=np.float64,
                  low_pass: float = LOW_PASS_DEFAULT) -> ProjectedScene:
    """Project every primitive; vectorized counterpart of the single-item ops."""
    n = scene.n
    pos = scene.position.astype(dtype)
    scale = scene.scales().astype(dtype)
    quat = scene.unit_rotations().astype(dtype)
    color = scene.colors().astype(dtype)
    opacity = scene.opacities().astype(dtype)
    R = camera.rotation.astype(dtype)
    trans = camera.translation.astype(dtype)
    fx, fy = (dtype(camera.focal[0]), dtype(camera.focal[1]))
    cx, cy = (dtype(camera.principal_point[0]), dtype(camera.principal_point[1]))
    W, H = camera.resolution

    t = pos @ R.T + trans
    tz = t[:, 2]
    in_depth = (tz > camera.near) & (tz < camera.far)
    tz_safe = np.where(in_depth, tz, dtype(1.0))

    xy = np.empty((n, 2), dtype=dtype)
    xy[:, 0] = fx * t[:, 0] / tz_safe + cx
    xy[:, 1] = fy * t[:, 1] / tz_safe + cy

    cov_world = compose_cov3d(scale, quat).astype(dtype)

    J = np.zeros((n, 2, 3), dtype=dtype)
    J[:, 0, 0] = fx / tz_safe
    J[:, 1, 1] = fy / tz_safe
    J[:, 0, 2] = -fx * t[:, 0] / tz_safe**2
    J[:, 1, 2] = -fy * t[:, 1] / tz_safe**2
    M = J @ R
    S = M @ cov_world @ np.swapaxes(M, 1, 2)
    sa = S[:, 0, 0] + dtype(low_pass)
    sb = S[:, 0, 1]
    sc = S[:, 1, 1] + dtype(low_pass)
    det = sa * sc - sb * sb
    nondegenerate = det > 0
    n_degenerate = int(np.count_nonzero(in_depth & ~nondegenerate))
    det_safe = np.where(nondegenerate, det, dtype(1.0))

    conic = np.stack([sc / det_safe, -sb / det_safe, sa / det_safe], axis=1)
    mid = dtype(0.5) * (sa + sc)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det_safe, dtype(0.0)))
    radius = dtype(EXTENT_SIGMA) * np.sqrt(lam_max)

    valid = in_depth & nondegenerate
    in_image = (
        valid
        & (xy[:, 0] + radius >= 0)
        & (xy[:, 0] - radius <= W - 1)
        & (xy[:, 1] + radius >= 0)
        & (xy[:, 1] - radius <= H - 1)
    )

    return ProjectedScene(
        xy=xy, depth=tz, conic=conic, radius=radius, color=color, opacity=opacity,
        valid=valid, in_image=in_image, t_cam=t, M=M,
        cov_screen=np.stack([sa, sb, sc], axis=1), cov_world=cov_world,
        scale=scale, unit_quat=quat, n_degenerate=n_degenerate,
    )
