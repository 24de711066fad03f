"""Analytic backward pass for the tile rasterizer.

Structure mirrors the forward: gradients are produced per pixel, folded
along each lane's 4-pixel run in coefficient space (one weighted sum per
exponent coefficient instead of per pixel), collapsed across the 32
lanes with a single group reduction per gradient channel, and finally
scattered into per-primitive arrays tile by tile in a fixed order. The
conic channels go through the exponent-aligned integer reduction by
default; everything else uses the plain tree reduction.

A per-pixel reference path (`backward_reference`) skips the fold/lane
structure entirely and sums raw pixel gradients; it exists as the
independent oracle for the folded path and as the slow arm of the
benchmark harness.

The opacity-gradient statistics (S = sum of squared per-fragment
dLoss/d opacity, M = their sum, C = fragment count) are gathered here
because the blending replay is the only place the per-fragment values
exist.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError, StaleSceneError
from .forward import RenderContext, _lane_pixels, scanline_coeffs
from .reduction import exp_aligned_reduce, lane_group_reduce
from .scene import SceneSoA, quat_to_rotmat
from .tiles import SCAN_I
from .ccc import scatter_grads

GRAD_CHANNELS = ("position", "log_scale", "rotation", "color", "opacity_logit")


@dataclass
class SceneGrads:
    position: np.ndarray       # (N, 3)
    log_scale: np.ndarray      # (N, 3)
    rotation: np.ndarray       # (N, 4)
    color: np.ndarray          # (N, 3)
    opacity_logit: np.ndarray  # (N,)

    def as_dict(self):
        return {name: getattr(self, name) for name in GRAD_CHANNELS}

    @classmethod
    def zeros(cls, n, dtype=np.float64):
        return cls(
            position=np.zeros((n, 3), dtype=dtype),
            log_scale=np.zeros((n, 3), dtype=dtype),
            rotation=np.zeros((n, 4), dtype=dtype),
            color=np.zeros((n, 3), dtype=dtype),
            opacity_logit=np.zeros(n, dtype=dtype),
        )


@dataclass
class DensifyStats:
    """Running moments of the per-fragment opacity gradient."""

    S: np.ndarray  # (N,) sum of squares
    M: np.ndarray  # (N,) sum
    C: np.ndarray  # (N,) int64 fragment count

    @classmethod
    def zeros(cls, n):
        return cls(S=np.zeros(n), M=np.zeros(n), C=np.zeros(n, dtype=np.int64))

    def reset(self):
        self.S[:] = 0.0
        self.M[:] = 0.0
        self.C[:] = 0

    def attach(self, scene: SceneSoA):
        """Register the arrays as scene extras so restructuring carries them."""
        scene.register_extra("densify_S", self.S)
        scene.register_extra("densify_M", self.M)
        scene.register_extra("densify_C", self.C)

    @classmethod
    def from_scene(cls, scene: SceneSoA):
        return cls(S=scene.extras["densify_S"], M=scene.extras["densify_M"],
                   C=scene.extras["densify_C"])


@dataclass
class BackwardResult:
    grads: SceneGrads
    stats: DensifyStats          # the scene-accumulated statistics
    cluster_mask: np.ndarray     # clusters eligible for optimizer updates


def pixel_grad(dL_dI, T, alpha, G, opacity, color, suffix):
    """Gradients of one blended fragment at one pixel.

    `suffix` is sum_{j>k} T_j alpha_j c_j plus the background tail; T and
    alpha describe this fragment. Returns (d_color, d_opacity, d_G). A
    skipped fragment (alpha == 0) has no influence at all.
    """
    dL_dI = np.asarray(dL_dI, dtype=np.float64)
    color = np.asarray(color, dtype=np.float64)
    suffix = np.asarray(suffix, dtype=np.float64)
    if alpha == 0.0:
        return np.zeros(3), 0.0, 0.0
    d_color = dL_dI * T * alpha
    d_alpha = float(np.dot(dL_dI, T * color - suffix / (1.0 - alpha)))
    return d_color, d_alpha * G, d_alpha * opacity


def _replay_tile(tile, projected, config, resolution, dtype):
    """Recompute the forward blending state of one tile (scanline kernel)."""
    px, py0, valid = _lane_pixels(tile.origin, resolution, dtype)
    prim = tile.primitives
    xy = projected.xy[prim].astype(dtype)
    conic = projected.conic[prim].astype(dtype)
    opacity = projected.opacity[prim].astype(dtype)
    color = projected.color[prim].astype(dtype)

    dx = xy[:, 0:1] - px[None, :]
    dy = xy[:, 1:2] - py0[None, :]
    basic, linear, quad = scanline_coeffs(conic[:, None, :], dx, dy)
    i = SCAN_I.astype(dtype)
    G = np.exp(basic[..., None] + linear[..., None] * i + quad[..., None] * (i * i))

    alpha = np.minimum(opacity[:, None, None] * G, dtype(config.alpha_max))
    unclamped = opacity[:, None, None] * G < dtype(config.alpha_max)
    usable = (alpha >= dtype(config.alpha_min)) & valid
    alpha_eff = np.where(usable, alpha, dtype(0.0))
    one_minus = dtype(1.0) - alpha_eff
    T_after = np.cumprod(one_minus, axis=0)
    T_before = np.concatenate([np.ones((1,) + T_after.shape[1:], dtype=dtype), T_after[:-1]], axis=0)
    active = T_before >= dtype(config.t_stop)
    contributing = active & (alpha_eff > 0)
    T_final = np.prod(np.where(active, one_minus, dtype(1.0)), axis=0)
    return dict(
        prim=prim, dx=dx, dy=dy, conic=conic, opacity=opacity, color=color, G=G,
        alpha_eff=alpha_eff, one_minus=one_minus, T_before=T_before, active=active,
        contributing=contributing, T_final=T_final, unclamped=unclamped, valid=valid,
    )


def _fragment_grads(state, dI_tile, background, dtype):
    """Per-(fragment, lane, run-offset) upstream gradients.

    Returns dL/d alpha-premultiplied quantities: the per-fragment color
    gradient weight w = T*alpha, the opacity gradient f = dL/do, and the
    footprint gradient u = dL/dG.
    """
    alpha_eff = state["alpha_eff"]
    T_before = state["T_before"]
    active = state["active"]
    color = state["color"]
    w = np.where(active, T_before * alpha_eff, dtype(0.0))          # (P, 32, 4)
    W_rgb = w[..., None] * color[:, None, None, :]                  # (P, 32, 4, 3)
    total = W_rgb.sum(axis=0)
    suffix = total - np.cumsum(W_rgb, axis=0)                       # sum over j > k
    suffix = suffix + (state["T_final"][..., None] * background)

    gate = state["contributing"]
    safe = np.where(gate, state["one_minus"], dtype(1.0))
    # dL/d alpha_k = dI . (T_k c_k - suffix_k / (1 - alpha_k))
    d_alpha = (
        dI_tile[None]
        * (T_before[..., None] * color[:, None, None, :] - suffix / safe[..., None])
    ).sum(axis=-1)
    d_alpha = np.where(gate, d_alpha, dtype(0.0))
    d_alpha_pre = np.where(state["unclamped"], d_alpha, dtype(0.0))
    f = d_alpha_pre * state["G"]                # dL/d opacity per fragment
    u = d_alpha_pre * state["opacity"][:, None, None]  # dL/dG per fragment
    return w, f, u


def scanline_grad_fold(u, G, dx, dy, conic):
    """Fold per-pixel footprint gradients along each run, then chain to
    conic and screen-mean gradients once per lane.

    u, G are (P, 32, 4); dx, dy (P, 32); conic (P, 3). Returns per-lane
    partials, each (P, 32).
    """
    i = SCAN_I.astype(u.dtype)
    uG = u * G
    g_basic = uG.sum(axis=-1)
    g_linear = (uG * i).sum(axis=-1)
    g_quad = (uG * (i * i)).sum(axis=-1)

    a = conic[:, 0:1]
    b = conic[:, 1:2]
    c = conic[:, 2:3]
    da = g_basic * (-0.5 * dx * dx)
    db = g_basic * (-dx * dy) + g_linear * dx
    dc = g_basic * (-0.5 * dy * dy) + g_linear * dy + g_quad * (-0.5)
    du = g_basic * (-(a * dx + b * dy)) + g_linear * b
    dv = g_basic * (-(b * dx + c * dy)) + g_linear * c
    return da, db, dc, du, dv


def _reduce_lanes(values, mode):
    if mode == "exp_aligned":
        return exp_aligned_reduce(values, axis=-1)
    return lane_group_reduce(values, axis=-1)


def backward(scene: SceneSoA, ctx: RenderContext, dL_dI, stats: DensifyStats | None = None,
             trace: list | None = None) -> BackwardResult:
    """Full-scene gradients for the render recorded in `ctx`.

    dL_dI is (H, W, 3). Statistics accumulate into `stats` (or the
    scene-attached arrays when omitted). `trace`, when given, collects
    (primitive_id, x, y, dL/do) per fragment for the brute-force oracle.
    """
    if ctx.generation != scene.generation:
        raise StaleSceneError(
            f"render context generation {ctx.generation} != scene generation {scene.generation}")
    H, W = ctx.camera.resolution[1], ctx.camera.resolution[0]
    if dL_dI.shape != (H, W, 3):
        raise ShapeMismatchError(f"dL_dI shape {dL_dI.shape} != {(H, W, 3)}")
    if stats is None:
        stats = DensifyStats.from_scene(scene) if "densify_S" in scene.extras \
            else DensifyStats.zeros(scene.n)

    config = ctx.config
    dtype = config.np_dtype
    projected = ctx.projected
    nc = len(ctx.compact_map)
    background = np.asarray(config.background, dtype=dtype)

    g_screen = {k: np.zeros(nc, dtype=dtype) for k in ("a", "b", "c", "u", "v", "o")}
    g_color = np.zeros((nc, 3), dtype=dtype)
    stat_S = np.zeros(nc)
    stat_M = np.zeros(nc)
    stat_C = np.zeros(nc, dtype=np.int64)

    dI = np.asarray(dL_dI, dtype=dtype)
    for tile in ctx.tiles:
        prim = tile.primitives
        if prim.size == 0:
            continue
        state = _replay_tile(tile, projected, config, ctx.camera.resolution, dtype)
        dI_tile = _gather_tile_grad(dI, tile, dtype)
        w, f, u = _fragment_grads(state, dI_tile, background, dtype)

        da_l, db_l, dc_l, du_l, dv_l = scanline_grad_fold(
            u, state["G"], state["dx"], state["dy"], state["conic"])
        dcol_l = np.einsum("plk,lkc->plc", w, dI_tile)    # per-lane color partials
        do_l = f.sum(axis=-1)                             # per-lane opacity partials

        # one group reduction per gradient channel (batched: channel axis first)
        conic = _reduce_lanes(np.stack([da_l, db_l, dc_l]), config.conic_reduce)
        rest = _reduce_lanes(np.stack(
            [du_l, dv_l, do_l, dcol_l[:, :, 0], dcol_l[:, :, 1], dcol_l[:, :, 2]]), "tree")

        f64 = f.astype(np.float64)
        sm_part = lane_group_reduce(np.stack([(f64 * f64).sum(axis=-1), f64.sum(axis=-1)]))
        c_part = state["contributing"].sum(axis=(1, 2)).astype(np.int64)

        np.add.at(g_screen["a"], prim, conic[0].astype(dtype))
        np.add.at(g_screen["b"], prim, conic[1].astype(dtype))
        np.add.at(g_screen["c"], prim, conic[2].astype(dtype))
        np.add.at(g_screen["u"], prim, rest[0].astype(dtype))
        np.add.at(g_screen["v"], prim, rest[1].astype(dtype))
        np.add.at(g_screen["o"], prim, rest[2].astype(dtype))
        np.add.at(g_color, prim, rest[3:6].T.astype(dtype))
        np.add.at(stat_S, prim, sm_part[0])
        np.add.at(stat_M, prim, sm_part[1])
        np.add.at(stat_C, prim, c_part)

        if trace is not None:
            _collect_trace(trace, tile, state, f, ctx.compact_map)

    compact_raw = _chain_projection(scene, ctx, g_screen, g_color)
    full, cluster_mask = scatter_grads(compact_raw, ctx.compact_map, scene.n)
    grads = SceneGrads(**{k: full[k] for k in GRAD_CHANNELS})

    np.add.at(stats.S, ctx.compact_map, stat_S)
    np.add.at(stats.M, ctx.compact_map, stat_M)
    np.add.at(stats.C, ctx.compact_map, stat_C)
    return BackwardResult(grads=grads, stats=stats, cluster_mask=cluster_mask)


def backward_reference(scene: SceneSoA, ctx: RenderContext, dL_dI,
                       stats: DensifyStats | None = None) -> BackwardResult:
    """Per-pixel oracle: same math, no coefficient fold, no lane tree.

    Pixel gradients chain straight through the per-pixel exponent and are
    summed with plain array reductions; shares only the projection chain
    with the folded path.
    """
    if ctx.generation != scene.generation:
        raise StaleSceneError("stale render context")
    if stats is None:
        stats = DensifyStats.zeros(scene.n)
    config = ctx.config
    dtype = config.np_dtype
    projected = ctx.projected
    nc = len(ctx.compact_map)
    background = np.asarray(config.background, dtype=dtype)

    g_screen = {k: np.zeros(nc, dtype=dtype) for k in ("a", "b", "c", "u", "v", "o")}
    g_color = np.zeros((nc, 3), dtype=dtype)
    stat_S = np.zeros(nc)
    stat_M = np.zeros(nc)
    stat_C = np.zeros(nc, dtype=np.int64)

    dI = np.asarray(dL_dI, dtype=dtype)
    for tile in ctx.tiles:
        prim = tile.primitives
        if prim.size == 0:
            continue
        state = _replay_tile(tile, projected, config, ctx.camera.resolution, dtype)
        dI_tile = _gather_tile_grad(dI, tile, dtype)
        w, f, u = _fragment_grads(state, dI_tile, background, dtype)

        dx = state["dx"][..., None]                      # (P, 32, 1)
        dyi = state["dy"][..., None] - SCAN_I.astype(dtype)
        conic = state["conic"]
        a = conic[:, 0, None, None]
        b = conic[:, 1, None, None]
        c = conic[:, 2, None, None]
        uG = u * state["G"]
        da = (uG * (-0.5 * dx * dx)).sum(axis=(1, 2))
        db = (uG * (-dx * dyi)).sum(axis=(1, 2))
        dc = (uG * (-0.5 * dyi * dyi)).sum(axis=(1, 2))
        du = (uG * (-(a * dx + b * dyi))).sum(axis=(1, 2))
        dv = (uG * (-(b * dx + c * dyi))).sum(axis=(1, 2))
        dcol = np.einsum("plk,lkc->pc", w, dI_tile)
        do = f.sum(axis=(1, 2))

        np.add.at(g_screen["a"], prim, da.astype(dtype))
        np.add.at(g_screen["b"], prim, db.astype(dtype))
        np.add.at(g_screen["c"], prim, dc.astype(dtype))
        np.add.at(g_screen["u"], prim, du.astype(dtype))
        np.add.at(g_screen["v"], prim, dv.astype(dtype))
        np.add.at(g_screen["o"], prim, do.astype(dtype))
        np.add.at(g_color, prim, dcol.astype(dtype))
        np.add.at(stat_S, prim, (f.astype(np.float64) ** 2).sum(axis=(1, 2)))
        np.add.at(stat_M, prim, f.astype(np.float64).sum(axis=(1, 2)))
        np.add.at(stat_C, prim, state["contributing"].sum(axis=(1, 2)).astype(np.int64))

    compact_raw = _chain_projection(scene, ctx, g_screen, g_color)
    full, cluster_mask = scatter_grads(compact_raw, ctx.compact_map, scene.n)
    grads = SceneGrads(**{k: full[k] for k in GRAD_CHANNELS})
    np.add.at(stats.S, ctx.compact_map, stat_S)
    np.add.at(stats.M, ctx.compact_map, stat_M)
    np.add.at(stats.C, ctx.compact_map, stat_C)
    return BackwardResult(grads=grads, stats=stats, cluster_mask=cluster_mask)


def _gather_tile_grad(dI, tile, dtype):
    """Image gradient restricted to a tile, in lane-major (32, 4, 3) layout."""
    H, W = dI.shape[:2]
    x0, y0 = tile.origin
    from .tiles import LANE_X, LANE_Y0
    xs = np.minimum(x0 + LANE_X, W - 1)
    ys = np.minimum(y0 + LANE_Y0[:, None] + SCAN_I, H - 1)
    out = dI[ys, xs[:, None]].astype(dtype)
    valid = ((x0 + LANE_X) < W)[:, None] & ((y0 + LANE_Y0[:, None] + SCAN_I) < H)
    out[~valid] = 0.0
    return out


def _collect_trace(trace, tile, state, f, compact_map):
    from .tiles import LANE_X, LANE_Y0
    mask = state["contributing"]
    ks, ls, iis = np.nonzero(mask)
    x0, y0 = tile.origin
    xs = x0 + LANE_X[ls]
    ys = y0 + LANE_Y0[ls] + SCAN_I[iis]
    ids = compact_map[state["prim"][ks]]
    vals = f[ks, ls, iis]
    for pid, x, y, v in zip(ids, xs, ys, vals):
        trace.append((int(pid), int(x), int(y), float(v)))


# ---------------------------------------------------------------------------
# screen-space -> raw-parameter chain


def _sigmoid_prime(y):
    return y * (1.0 - y)


def _chain_projection(scene: SceneSoA, ctx: RenderContext, g_screen, g_color):
    """Chain conic/mean/opacity/color gradients back to the raw channels
    for the compact buffer. Heavy lifting is plain matrix calculus; every
    formula is pinned by the finite-difference suite."""
    projected = ctx.projected
    cmap = ctx.compact_map
    nc = len(cmap)
    camera = ctx.camera
    out = {
        "position": np.zeros((nc, 3)),
        "log_scale": np.zeros((nc, 3)),
        "rotation": np.zeros((nc, 4)),
        "color": np.zeros((nc, 3)),
        "opacity_logit": np.zeros(nc),
    }
    if nc == 0:
        return out

    # activation chains (exact regardless of visibility)
    out["color"] = np.asarray(g_color, dtype=np.float64) * _sigmoid_prime(projected.color)
    out["opacity_logit"] = np.asarray(g_screen["o"], dtype=np.float64) * _sigmoid_prime(projected.opacity)

    live = projected.valid
    if not live.any():
        return out
    idx = np.flatnonzero(live)

    ga = np.asarray(g_screen["a"], dtype=np.float64)[idx]
    gb = np.asarray(g_screen["b"], dtype=np.float64)[idx]
    gc = np.asarray(g_screen["c"], dtype=np.float64)[idx]
    gu = np.asarray(g_screen["u"], dtype=np.float64)[idx]
    gv = np.asarray(g_screen["v"], dtype=np.float64)[idx]

    sa = projected.cov_screen[idx, 0].astype(np.float64)
    sb = projected.cov_screen[idx, 1].astype(np.float64)
    sc = projected.cov_screen[idx, 2].astype(np.float64)
    det = sa * sc - sb * sb
    a = sc / det
    b = -sb / det
    c = sa / det

    # conic -> screen covariance: dL/dS = -C (dL/dConic) C with the
    # off-diagonal gradient split between the two symmetric slots.
    p00, p01, p11 = ga, 0.5 * gb, gc
    cp00 = a * p00 + b * p01
    cp01 = a * p01 + b * p11
    cp10 = b * p00 + c * p01
    cp11 = b * p01 + c * p11
    q00 = cp00 * a + cp01 * b
    q01 = cp00 * b + cp01 * c
    q11 = cp10 * b + cp11 * c
    gsa = -q00
    gsb = -2.0 * q01
    gsc = -q11

    M = projected.M[idx].astype(np.float64)            # (n, 2, 3)
    covw = projected.cov_world[idx].astype(np.float64)  # (n, 3, 3)
    Gs = np.empty((len(idx), 2, 2))
    Gs[:, 0, 0] = gsa
    Gs[:, 0, 1] = Gs[:, 1, 0] = 0.5 * gsb
    Gs[:, 1, 1] = gsc

    # S = M covw M^T + lowpass I
    dcovw = np.swapaxes(M, 1, 2) @ Gs @ M               # (n, 3, 3) symmetric
    dM = 2.0 * (Gs @ M @ covw)

    R = camera.rotation
    dJ = dM @ R.T                                       # (n, 2, 3)

    t = projected.t_cam[idx].astype(np.float64)
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
    fx, fy = camera.focal
    dt = np.zeros((len(idx), 3))
    # Jacobian entries J = [[fx/z, 0, -fx x/z^2], [0, fy/z, -fy y/z^2]]
    dt[:, 0] += dJ[:, 0, 2] * (-fx / tz**2)
    dt[:, 1] += dJ[:, 1, 2] * (-fy / tz**2)
    dt[:, 2] += (
        dJ[:, 0, 0] * (-fx / tz**2)
        + dJ[:, 1, 1] * (-fy / tz**2)
        + dJ[:, 0, 2] * (2.0 * fx * tx / tz**3)
        + dJ[:, 1, 2] * (2.0 * fy * ty / tz**3)
    )
    # screen mean u = fx x/z + cx, v = fy y/z + cy
    dt[:, 0] += gu * fx / tz
    dt[:, 1] += gv * fy / tz
    dt[:, 2] += gu * (-fx * tx / tz**2) + gv * (-fy * ty / tz**2)

    out["position"][idx] = dt @ R

    # covw = R_q diag(s^2) R_q^T
    scale = projected.scale[idx].astype(np.float64)
    quat = projected.unit_quat[idx].astype(np.float64)
    Rq = quat_to_rotmat(quat)
    dD = np.swapaxes(Rq, 1, 2) @ dcovw @ Rq
    diag = np.einsum("nii->ni", dD)
    out["log_scale"][idx] = diag * 2.0 * scale**2

    dRq = 2.0 * (dcovw @ Rq) * (scale**2)[:, None, :]
    dq_hat = _rotmat_grad_to_quat(dRq, quat)
    # through normalization q_hat = q / |q|
    raw_q = scene.rotation[cmap[idx]]
    norm = np.linalg.norm(raw_q, axis=1, keepdims=True)
    proj = (dq_hat * quat).sum(axis=1, keepdims=True)
    out["rotation"][idx] = (dq_hat - proj * quat) / norm
    return out


def _rotmat_grad_to_quat(dR, q):
    """Contract dL/dR with dR/dq for unit quaternions (w, x, y, z)."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    g = np.empty_like(q)
    d = dR
    g[:, 0] = 2.0 * (
        -z * d[:, 0, 1] + y * d[:, 0, 2]
        + z * d[:, 1, 0] - x * d[:, 1, 2]
        - y * d[:, 2, 0] + x * d[:, 2, 1]
    )
    g[:, 1] = 2.0 * (
        y * d[:, 0, 1] + z * d[:, 0, 2]
        + y * d[:, 1, 0] - 2.0 * x * d[:, 1, 1] - w * d[:, 1, 2]
        + z * d[:, 2, 0] + w * d[:, 2, 1] - 2.0 * x * d[:, 2, 2]
    )
    g[:, 2] = 2.0 * (
        -2.0 * y * d[:, 0, 0] + x * d[:, 0, 1] + w * d[:, 0, 2]
        + x * d[:, 1, 0] + z * d[:, 1, 2]
        - w * d[:, 2, 0] + z * d[:, 2, 1] - 2.0 * y * d[:, 2, 2]
    )
    g[:, 3] = 2.0 * (
        -2.0 * z * d[:, 0, 0] - w * d[:, 0, 1] + x * d[:, 0, 2]
        + w * d[:, 1, 0] - 2.0 * z * d[:, 1, 1] + y * d[:, 1, 2]
        + x * d[:, 2, 0] + y * d[:, 2, 1]
    )
    return g


def write_trace(trace, path):
    """Line-delimited fragment dump: primitive id, pixel x, pixel y, dL/do."""
    with open(path, "w") as fh:
        for pid, x, y, v in trace:
            fh.write(f"{pid} {x} {y} {v!r}\n")


def read_trace(path):
    out = []
    with open(path) as fh:
        for line in fh:
            pid, x, y, v = line.split()
            out.append((int(pid), int(x), int(y), float(v)))
    return out
