"""Cluster-Cull-Compact: Z-order sorting, fixed-size clusters, frustum
culling at cluster granularity, and the compaction/scatter pair that lets
gradients and optimizer updates touch only visible contiguous blocks.

Positions are quantized to 21 bits per axis inside the scene bounding box
and the bits interleaved x -> bit 3k, y -> 3k+1, z -> 3k+2, giving a
63-bit key whose order preserves spatial locality. The scene is re-sorted
by key at fixed intervals and after every densification, which keeps
consecutive 128-primitive clusters spatially tight and their AABBs small.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError, ValidationError
from .projection import Frustum
from .scene import SceneSoA

CLUSTER_SIZE = 128
MORTON_BITS = 21
MORTON_MAX = (1 << MORTON_BITS) - 1
MIN_EXTENT = 1e-6  # floor for degenerate (flat) scene axes


def _spread_bits(x):
    """Insert two zero bits between the low 21 bits of each value."""
    x = x.astype(np.uint64) & np.uint64(0x1FFFFF)
    x = (x | (x << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
    x = (x | (x << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
    x = (x | (x << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
    x = (x | (x << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
    x = (x | (x << np.uint64(2))) & np.uint64(0x1249249249249249)
    return x


def _compact_bits(x):
    x = x.astype(np.uint64) & np.uint64(0x1249249249249249)
    x = (x | (x >> np.uint64(2))) & np.uint64(0x10C30C30C30C30C3)
    x = (x | (x >> np.uint64(4))) & np.uint64(0x100F00F00F00F00F)
    x = (x | (x >> np.uint64(8))) & np.uint64(0x1F0000FF0000FF)
    x = (x | (x >> np.uint64(16))) & np.uint64(0x1F00000000FFFF)
    x = (x | (x >> np.uint64(32))) & np.uint64(0x1FFFFF)
    return x


def quantize(positions, bounds_min, bounds_max):
    """Positions to integer grid coordinates in [0, 2^21 - 1]."""
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    bad = ~np.isfinite(positions)
    if bad.any():
        raise ValidationError("position", int(np.argwhere(bad)[0][0]), "non-finite position")
    extent = np.maximum(np.asarray(bounds_max, dtype=np.float64) - bounds_min, MIN_EXTENT)
    u = np.clip((positions - bounds_min) / extent, 0.0, 1.0)
    return np.floor(u * MORTON_MAX).astype(np.uint64)


def morton_encode(positions, bounds_min, bounds_max):
    """63-bit Z-order keys for positions within the given scene bounds."""
    q = quantize(positions, bounds_min, bounds_max)
    return (
        _spread_bits(q[:, 0])
        | (_spread_bits(q[:, 1]) << np.uint64(1))
        | (_spread_bits(q[:, 2]) << np.uint64(2))
    )


def morton_decode(codes):
    """Inverse of the bit interleave: keys back to quantized grid coordinates."""
    codes = np.asarray(codes, dtype=np.uint64)
    return np.stack([
        _compact_bits(codes),
        _compact_bits(codes >> np.uint64(1)),
        _compact_bits(codes >> np.uint64(2)),
    ], axis=-1)


def morton_sort(scene: SceneSoA) -> np.ndarray:
    """Stable in-place sort of the scene (and all registered extras) by
    Morton key. Returns the permutation that was applied; the generation
    counter bumps even when the order was already sorted."""
    if scene.n == 0:
        scene.generation += 1
        return np.zeros(0, dtype=np.int64)
    lo, hi = scene.bounds()
    codes = morton_encode(scene.position, lo, hi)
    perm = np.argsort(codes, kind="stable")
    scene.permute(perm)
    return perm


def cluster_count(n: int, cluster_size: int = CLUSTER_SIZE) -> int:
    return (n + cluster_size - 1) // cluster_size


@dataclass
class ClusterIndex:
    cluster_size: int
    aabb_min: np.ndarray  # (K, 3)
    aabb_max: np.ndarray  # (K, 3)
    n: int                # primitives covered

    @property
    def n_clusters(self) -> int:
        return len(self.aabb_min)

    def member_slice(self, k: int) -> slice:
        return slice(k * self.cluster_size, min((k + 1) * self.cluster_size, self.n))


def build_clusters(scene: SceneSoA, cluster_size: int = CLUSTER_SIZE) -> ClusterIndex:
    """AABBs over consecutive blocks of the (ideally Morton-sorted) scene.

    Each box is inflated by the member's 3-sigma world extent (three times
    its largest scale) so the box bounds everything the primitive can
    meaningfully cover, making cluster culling conservative.
    """
    n = scene.n
    k = cluster_count(n, cluster_size)
    aabb_min = np.empty((k, 3))
    aabb_max = np.empty((k, 3))
    if n:
        reach = 3.0 * scene.scales().max(axis=1, keepdims=True)
        lo = scene.position - reach
        hi = scene.position + reach
        for c in range(k):
            s = slice(c * cluster_size, min((c + 1) * cluster_size, n))
            aabb_min[c] = lo[s].min(axis=0)
            aabb_max[c] = hi[s].max(axis=0)
    return ClusterIndex(cluster_size=cluster_size, aabb_min=aabb_min, aabb_max=aabb_max, n=n)


def cull_clusters(index: ClusterIndex, frustum: Frustum) -> np.ndarray:
    """Visibility mask: a cluster survives unless its AABB lies entirely
    outside some frustum plane (the usual conservative p-vertex test)."""
    k = index.n_clusters
    if k == 0:
        return np.zeros(0, dtype=bool)
    normals = frustum.planes[:, :3]           # (6, 3)
    offsets = frustum.planes[:, 3]            # (6,)
    # farthest corner along each plane normal
    pick_max = normals[None, :, :] >= 0.0     # (1, 6, 3)
    corner = np.where(pick_max, index.aabb_max[:, None, :], index.aabb_min[:, None, :])
    dist = np.einsum("kpc,pc->kp", corner, normals) + offsets
    return np.all(dist >= 0.0, axis=1)


def cluster_visibility(index: ClusterIndex, frustum: Frustum, in_image: np.ndarray) -> np.ndarray:
    """Render-time cluster mask: the AABB/frustum test, widened so that any
    cluster holding a fragment-generating primitive stays visible.

    The widening closes the gap between the world-space box test and the
    screen-space footprint (low-pass dilation and the circumscribed-disc
    radius can poke into the image even when the 3-sigma ellipsoid lies
    outside), which is what makes culling exactly invisible in the output.
    """
    mask = cull_clusters(index, frustum)
    if index.n:
        k = index.n_clusters
        pad = k * index.cluster_size - index.n
        per_cluster = np.pad(in_image, (0, pad)).reshape(k, index.cluster_size)
        mask |= per_cluster.any(axis=1)
    return mask


def _gather(arr, idx):
    return np.ascontiguousarray(arr[idx])


def compact_arrays(struct_or_dict, cluster_mask, cluster_size, n):
    """Copy the channels of visible clusters into contiguous buffers.

    Accepts a dict of arrays or a dataclass-like object whose ndarray
    attributes all have leading dimension n. Returns (compacted, map)
    where map sends compact slots to original indices.
    """
    k = len(cluster_mask)
    starts = np.arange(k) * cluster_size
    ends = np.minimum(starts + cluster_size, n)
    keep = cluster_mask & (ends > starts)
    pieces = [np.arange(s, e) for s, e in zip(starts[keep], ends[keep])]
    compact_map = np.concatenate(pieces) if pieces else np.zeros(0, dtype=np.int64)
    compact_map = compact_map.astype(np.int64)

    if isinstance(struct_or_dict, dict):
        out = {kk: _gather(v, compact_map) for kk, v in struct_or_dict.items()}
        return out, compact_map
    import copy as _copy
    out = _copy.copy(struct_or_dict)
    for name, value in vars(struct_or_dict).items():
        if isinstance(value, np.ndarray) and value.ndim >= 1 and len(value) == n:
            setattr(out, name, _gather(value, compact_map))
    return out, compact_map


def scatter_grads(compact_grads: dict, compact_map: np.ndarray, n: int,
                  cluster_size: int = CLUSTER_SIZE):
    """Write compact per-primitive gradients back to full-length arrays.

    Untouched rows stay zero. Also returns the per-cluster update mask
    (clusters whose block received any slot), which the optimizer uses to
    confine parameter updates to visible contiguous blocks.
    """
    full = {}
    for name, arr in compact_grads.items():
        if len(arr) != len(compact_map):
            raise ShapeMismatchError(
                f"gradient '{name}' has {len(arr)} rows, compact map has {len(compact_map)}")
        out = np.zeros((n,) + arr.shape[1:], dtype=arr.dtype)
        out[compact_map] = arr
        full[name] = out
    mask = np.zeros(cluster_count(n, cluster_size), dtype=bool)
    if len(compact_map):
        mask[np.unique(compact_map // cluster_size)] = True
    return full, mask
