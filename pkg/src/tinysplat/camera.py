"""Pinhole camera model and its on-disk text format.

Camera space: x right, y down, z forward (depth). A point is imaged at
pixel (fx*x/z + cx, fy*y/z + cy); integer pixel indices are the sample
positions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class CameraView:
    world_to_camera: np.ndarray  # (4, 4) rigid transform
    focal: np.ndarray            # (fx, fy) pixels
    principal_point: np.ndarray  # (cx, cy) pixels
    resolution: tuple            # (width, height) pixels
    near: float
    far: float

    def __post_init__(self):
        self.world_to_camera = np.asarray(self.world_to_camera, dtype=np.float64).reshape(4, 4)
        self.focal = np.asarray(self.focal, dtype=np.float64).reshape(2)
        self.principal_point = np.asarray(self.principal_point, dtype=np.float64).reshape(2)
        self.resolution = (int(self.resolution[0]), int(self.resolution[1]))
        self.near = float(self.near)
        self.far = float(self.far)
        if not (0.0 < self.near < self.far):
            raise ValueError(f"need 0 < near < far, got near={self.near} far={self.far}")
        R = self.rotation
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6):
            raise ValueError("world_to_camera rotation block is not orthonormal")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def to_camera(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return points @ self.rotation.T + self.translation


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """World-to-camera rigid transform for a camera at `eye` looking at `target`."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z = z / np.linalg.norm(z)
    up = np.asarray(up, dtype=np.float64)
    x = np.cross(up, z)
    nx = np.linalg.norm(x)
    if nx < 1e-9:  # looking along up: pick any perpendicular
        alt = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
        x = np.cross(alt, z)
        nx = np.linalg.norm(x)
    x = x / nx
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    w2c = np.eye(4)
    w2c[:3, :3] = R
    w2c[:3, 3] = -R @ eye
    return w2c


def save_camera(camera: CameraView, path):
    lines = [
        "world_to_camera = " + " ".join(repr(float(v)) for v in camera.world_to_camera.reshape(16)),
        "focal = " + " ".join(repr(float(v)) for v in camera.focal),
        "principal_point = " + " ".join(repr(float(v)) for v in camera.principal_point),
        f"resolution = {camera.resolution[0]} {camera.resolution[1]}",
        f"near = {camera.near!r}",
        f"far = {camera.far!r}",
    ]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_camera(path) -> CameraView:
    fields = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.split()
    try:
        return CameraView(
            world_to_camera=np.array([float(v) for v in fields["world_to_camera"]]).reshape(4, 4),
            focal=[float(v) for v in fields["focal"]],
            principal_point=[float(v) for v in fields["principal_point"]],
            resolution=[int(v) for v in fields["resolution"]],
            near=float(fields["near"][0]),
            far=float(fields["far"][0]),
        )
    except KeyError as e:
        raise ValueError(f"{path}: missing camera field {e}") from e
