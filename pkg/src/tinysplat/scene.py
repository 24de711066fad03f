"""Gaussian scene parameters.

The scene is stored as one contiguous float64 array per raw parameter
channel (structure-of-arrays). Raw channels live in unconstrained space:

    position       (N, 3)  world units
    log_scale      (N, 3)  log world units
    rotation       (N, 4)  unnormalized quaternion (w, x, y, z)
    color          (N, 3)  pre-sigmoid RGB
    opacity_logit  (N,)    pre-sigmoid opacity

Activated quantities (positive scales, unit quaternions, colors and
opacities in (0, 1)) are derived on demand and never stored. Companion
arrays (optimizer moments, densification statistics) can be registered
as "extras" so that every restructuring (permutation, growth, pruning)
carries them along atomically; the generation counter bumps exactly once
per restructuring call.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError, ValidationError

RAW_CHANNELS = ("position", "log_scale", "rotation", "color", "opacity_logit")
CHANNEL_WIDTHS = {"position": 3, "log_scale": 3, "rotation": 4, "color": 3, "opacity_logit": 1}


def sigmoid(x):
    x = np.asarray(x)
    out = np.empty_like(x, dtype=np.result_type(x, np.float64) if x.dtype.kind != "f" else x.dtype)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p):
    p = np.asarray(p)
    return np.log(p) - np.log1p(-p)


def quat_to_rotmat(q):
    """Unit quaternions (..., 4) in (w, x, y, z) order to rotation matrices (..., 3, 3)."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3), dtype=q.dtype)
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def compose_cov3d(scale, rotation):
    """World covariance R diag(scale^2) R^T from positive scales and unit quaternions.

    Accepts (3,) + (4,) or batched (N, 3) + (N, 4). Symmetric by construction;
    eigenvalues are the squared scales so the result is positive definite.
    """
    scale = np.asarray(scale, dtype=np.float64)
    rotation = np.asarray(rotation, dtype=np.float64)
    R = quat_to_rotmat(rotation)
    RD = R * (scale**2)[..., None, :]
    cov = RD @ np.swapaxes(R, -1, -2)
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))


@dataclass
class GaussianPrimitive:
    """One activated primitive (validated on construction)."""

    position: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray  # unit quaternion
    color: np.ndarray
    opacity: float

    def __post_init__(self):
        assert np.all(self.scale > 0)
        assert abs(np.linalg.norm(self.rotation) - 1.0) < 1e-6
        assert 0.0 < self.opacity < 1.0

    @property
    def cov3d(self):
        return compose_cov3d(self.scale, self.rotation)


def _check_finite(name, arr):
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = int(np.argwhere(bad)[0][0])
        raise ValidationError(name, idx, "non-finite value")


def activate(position, log_scale, rotation, color, opacity_logit):
    """Raw channels -> activated (position, scale, unit quaternion, color, opacity).

    Vectorized over the leading axis. Raises ValidationError naming the
    offending channel/index for non-finite inputs or zero-norm quaternions.
    """
    arrays = {
        "position": np.asarray(position, dtype=np.float64),
        "log_scale": np.asarray(log_scale, dtype=np.float64),
        "rotation": np.asarray(rotation, dtype=np.float64),
        "color": np.asarray(color, dtype=np.float64),
        "opacity_logit": np.asarray(opacity_logit, dtype=np.float64),
    }
    for name, arr in arrays.items():
        _check_finite(name, arr)
    qn = np.linalg.norm(arrays["rotation"], axis=-1)
    if np.any(qn == 0):
        raise ValidationError("rotation", int(np.argwhere(qn == 0)[0][0]), "zero-norm quaternion")
    return (
        arrays["position"],
        np.exp(arrays["log_scale"]),
        arrays["rotation"] / qn[..., None],
        sigmoid(arrays["color"]),
        sigmoid(arrays["opacity_logit"]),
    )


def activate_primitive(position, log_scale, rotation, color, opacity_logit) -> GaussianPrimitive:
    p, s, q, c, o = activate(position, log_scale, rotation, color, opacity_logit)
    return GaussianPrimitive(p, s, q, c, float(o))


def deactivate(position, scale, rotation, color, opacity):
    """Inverse of activate (rotation maps to its unit representative)."""
    return (
        np.asarray(position, dtype=np.float64),
        np.log(np.asarray(scale, dtype=np.float64)),
        np.asarray(rotation, dtype=np.float64),
        logit(np.asarray(color, dtype=np.float64)),
        logit(np.asarray(opacity, dtype=np.float64)),
    )


class SceneSoA:
    """Structure-of-arrays container for every per-primitive quantity.

    Single writer. Restructuring (permute / keep / append) rewrites every
    raw channel and every registered extra together and bumps `generation`
    once, so render/backward contexts can detect staleness.
    """

    def __init__(self, position, log_scale, rotation, color, opacity_logit):
        self.position = np.ascontiguousarray(position, dtype=np.float64).reshape(-1, 3)
        n = len(self.position)
        self.log_scale = np.ascontiguousarray(log_scale, dtype=np.float64).reshape(n, 3)
        self.rotation = np.ascontiguousarray(rotation, dtype=np.float64).reshape(n, 4)
        self.color = np.ascontiguousarray(color, dtype=np.float64).reshape(n, 3)
        self.opacity_logit = np.ascontiguousarray(opacity_logit, dtype=np.float64).reshape(n)
        self.extras: dict[str, np.ndarray] = {}
        self.generation = 0

    @classmethod
    def empty(cls) -> "SceneSoA":
        z = np.zeros((0, 3))
        return cls(z, z, np.zeros((0, 4)), z, np.zeros(0))

    def __len__(self):
        return len(self.position)

    @property
    def n(self) -> int:
        return len(self.position)

    def raw_channels(self):
        return {name: getattr(self, name) for name in RAW_CHANNELS}

    def register_extra(self, name: str, array: np.ndarray):
        if len(array) != self.n:
            raise ShapeMismatchError(f"extra '{name}' has length {len(array)}, scene has {self.n}")
        self.extras[name] = array

    def validate(self):
        for name, arr in self.raw_channels().items():
            _check_finite(name, arr)
        qn = np.linalg.norm(self.rotation, axis=-1)
        if np.any(qn == 0):
            raise ValidationError("rotation", int(np.argwhere(qn == 0)[0][0]), "zero-norm quaternion")

    # activated views -------------------------------------------------

    def scales(self):
        return np.exp(self.log_scale)

    def unit_rotations(self):
        return self.rotation / np.linalg.norm(self.rotation, axis=-1, keepdims=True)

    def colors(self):
        return sigmoid(self.color)

    def opacities(self):
        return sigmoid(self.opacity_logit)

    # restructuring ----------------------------------------------------

    def _apply(self, fn):
        for name in RAW_CHANNELS:
            setattr(self, name, fn(getattr(self, name)))
        for name in list(self.extras):
            self.extras[name] = fn(self.extras[name])
        self.generation += 1

    def permute(self, perm):
        perm = np.asarray(perm)
        if perm.shape != (self.n,):
            raise ShapeMismatchError(f"permutation length {perm.shape} != {self.n}")
        self._apply(lambda a: np.ascontiguousarray(a[perm]))

    def keep(self, mask):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.n,):
            raise ShapeMismatchError(f"mask length {mask.shape} != {self.n}")
        self._apply(lambda a: np.ascontiguousarray(a[mask]))

    def append_raw(self, position, log_scale, rotation, color, opacity_logit):
        """Append primitives; registered extras grow with zero rows."""
        new = {
            "position": np.asarray(position, dtype=np.float64).reshape(-1, 3),
            "log_scale": np.asarray(log_scale, dtype=np.float64).reshape(-1, 3),
            "rotation": np.asarray(rotation, dtype=np.float64).reshape(-1, 4),
            "color": np.asarray(color, dtype=np.float64).reshape(-1, 3),
            "opacity_logit": np.asarray(opacity_logit, dtype=np.float64).reshape(-1),
        }
        k = len(new["position"])
        for name in RAW_CHANNELS:
            setattr(self, name, np.concatenate([getattr(self, name), new[name]]))
        for name in list(self.extras):
            arr = self.extras[name]
            pad = np.zeros((k,) + arr.shape[1:], dtype=arr.dtype)
            self.extras[name] = np.concatenate([arr, pad])
        self.generation += 1

    def copy(self) -> "SceneSoA":
        out = SceneSoA(
            self.position.copy(),
            self.log_scale.copy(),
            self.rotation.copy(),
            self.color.copy(),
            self.opacity_logit.copy(),
        )
        out.extras = {k: v.copy() for k, v in self.extras.items()}
        out.generation = self.generation
        return out

    def bounds(self):
        """Scene AABB over positions; zeros for an empty scene."""
        if self.n == 0:
            return np.zeros(3), np.zeros(3)
        return self.position.min(axis=0), self.position.max(axis=0)


# ---------------------------------------------------------------------------
# PLY import/export (binary little-endian, raw-space values as float32)

PLY_PROPS = (
    "x", "y", "z",
    "f_dc_0", "f_dc_1", "f_dc_2",
    "opacity",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
)


def save_ply(scene: SceneSoA, path):
    rows = np.empty((scene.n, len(PLY_PROPS)), dtype="<f4")
    rows[:, 0:3] = scene.position
    rows[:, 3:6] = scene.color
    rows[:, 6] = scene.opacity_logit
    rows[:, 7:10] = scene.log_scale
    rows[:, 10:14] = scene.rotation
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {scene.n}"]
    header += [f"property float {p}" for p in PLY_PROPS]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(rows.tobytes())


def load_ply(path) -> SceneSoA:
    with open(path, "rb") as f:
        data = f.read()
    end = data.find(b"end_header\n")
    if end < 0:
        raise ValueError(f"{path}: not a ply file (missing end_header)")
    header = data[:end].decode("ascii").splitlines()
    body = data[end + len(b"end_header\n"):]
    n = None
    props = []
    for line in header:
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        elif parts and parts[0] == "property":
            if parts[1] != "float":
                raise ValueError(f"{path}: unsupported property type {parts[1]}")
            props.append(parts[2])
    if n is None:
        raise ValueError(f"{path}: missing vertex element")
    if tuple(props) != PLY_PROPS:
        raise ValueError(f"{path}: unexpected property layout {props}")
    rows = np.frombuffer(body, dtype="<f4", count=n * len(PLY_PROPS)).reshape(n, len(PLY_PROPS))
    rows = rows.astype(np.float64)
    return SceneSoA(rows[:, 0:3], rows[:, 7:10], rows[:, 10:14], rows[:, 3:6], rows[:, 6])
