"""Command-line entry points.

Subcommands: train, render, eval, bench, ablate, make-synthetic.
Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .camera import load_camera
from .configio import apply_overrides, emit_config, parse_config
from .errors import TinysplatError
from .forward import RasterConfig, forward, render
from .images import load_image, save_image
from .metrics import psnr, ssim
from .scene import load_ply
from .synthetic import SyntheticSceneSpec, make_synthetic, random_scene
from .train import TrainConfig, checkpoint, train


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _load_views(views_dir):
    """Pair cam_XXX.txt with target_XXX.png/ppm from a suite directory."""
    views_dir = Path(views_dir)
    cams = sorted(views_dir.glob("cam_*.txt"))
    if not cams:
        raise FileNotFoundError(f"no cam_*.txt files in {views_dir}")
    views = []
    for cam_path in cams:
        stem = cam_path.stem.split("_", 1)[1]
        target = None
        for ext in (".png", ".ppm"):
            p = views_dir / f"target_{stem}{ext}"
            if p.exists():
                target = p
                break
        if target is None:
            raise FileNotFoundError(f"no target image for {cam_path}")
        views.append((load_camera(cam_path), load_image(target)))
    return views


def cmd_train(args) -> int:
    cfg = parse_config(args.config) if args.config else TrainConfig()
    apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.deterministic:
        cfg.deterministic = True
    views = _load_views(args.views)
    if args.init_scene:
        scene = load_ply(args.init_scene)
    else:
        spec = SyntheticSceneSpec(
            n_gaussians=args.init_random, seed=cfg.seed,
            view_resolution=views[0][0].resolution)
        scene = random_scene(spec)
    result = train(cfg, scene, views)
    out = checkpoint(result, args.out, manifest_text=emit_config(cfg))
    final = result.metrics[-1] if result.metrics else None
    if final:
        print(f"trained {cfg.epochs} epochs: loss={final.loss:.6f} "
              f"psnr={final.psnr:.2f}dB n={final.n_primitives}")
    print(f"checkpoint written to {out}")
    return 0


def cmd_render(args) -> int:
    scene = load_ply(args.scene)
    camera = load_camera(args.camera)
    config = RasterConfig(dtype=args.dtype)
    out = render(scene, camera, config)
    save_image(out.color, args.out)
    print(f"rendered {scene.n} primitives to {args.out}")
    return 0


def cmd_eval(args) -> int:
    scene = load_ply(args.scene)
    views = _load_views(args.views)
    rows = []
    for i, (camera, target) in enumerate(views):
        img = render(scene, camera, RasterConfig(dtype=args.dtype)).color
        rows.append((i, psnr(img, target), ssim(img, target)))
    print("view,psnr,ssim")
    for i, p, s in rows:
        print(f"{i},{p:.4f},{s:.6f}")
    mean_p = np.mean([r[1] for r in rows])
    mean_s = np.mean([r[2] for r in rows])
    print(f"mean,{mean_p:.4f},{mean_s:.6f}")
    return 0


def _time_call(fn, repeat=2):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cmd_bench(args) -> int:
    from .backward import backward, backward_reference
    from .metrics import loss_and_grad
    from .synthetic import camera_ring

    counts = [int(x) for x in args.n.split(",")]
    rows = []
    for n in counts:
        spec = SyntheticSceneSpec(n_gaussians=n, n_views=1,
                                  view_resolution=(args.resolution, args.resolution), seed=7)
        scene = random_scene(spec)
        cam = camera_ring(spec)[0]
        scan_cfg = RasterConfig(kernel="scanline")
        naive_cfg = RasterConfig(kernel="naive")
        nocull_cfg = RasterConfig(kernel="scanline", use_culling=False)

        t_scan, (out, ctx) = _time_call(lambda: forward(scene, cam, scan_cfg))
        t_naive, _ = _time_call(lambda: forward(scene, cam, naive_cfg))
        t_nocull, _ = _time_call(lambda: forward(scene, cam, nocull_cfg))
        target = np.zeros_like(out.color)
        _, dI = loss_and_grad(out.color, target, 0.0)
        t_bwd, _ = _time_call(lambda: backward(scene, ctx, dI))
        t_bwd_ref, _ = _time_call(lambda: backward_reference(scene, ctx, dI))
        rows.append({
            "n": n,
            "forward_scanline_ms": 1e3 * t_scan,
            "forward_naive_ms": 1e3 * t_naive,
            "forward_speedup": t_naive / t_scan,
            "forward_noculling_ms": 1e3 * t_nocull,
            "culling_speedup": t_nocull / t_scan,
            "backward_folded_ms": 1e3 * t_bwd,
            "backward_perpixel_ms": 1e3 * t_bwd_ref,
            "backward_speedup": t_bwd_ref / t_bwd,
        })
    _write_csv(args.out, rows)
    for r in rows:
        print(f"n={r['n']}: forward {r['forward_scanline_ms']:.1f}ms "
              f"(naive/scanline={r['forward_speedup']:.2f}x), "
              f"backward {r['backward_folded_ms']:.1f}ms "
              f"(perpixel/folded={r['backward_speedup']:.2f}x)")
    return 0


ABLATION_ARMS = {
    "full": {},
    "no_decay": {"opacity_control": "hard_reset"},
    "no_var": {"metric": "position_grad"},
    "no_both": {"opacity_control": "hard_reset", "metric": "position_grad"},
}


def run_ablation(suite_dir, seeds, base_cfg: TrainConfig | None = None, init_n: int = 64):
    """Train every ablation arm on one suite for each seed.

    Returns rows of (arm, seed, psnr, ssim, n_primitives).
    """
    views = _load_views(suite_dir)
    rows = []
    for arm, tweaks in ABLATION_ARMS.items():
        for seed in seeds:
            cfg = base_cfg if base_cfg is not None else TrainConfig()
            cfg = replace(cfg, seed=seed,
                          densify=replace(cfg.densify, **tweaks))
            spec = SyntheticSceneSpec(n_gaussians=init_n, seed=seed,
                                      view_resolution=views[0][0].resolution)
            scene = random_scene(spec)
            result = train(cfg, scene, views)
            ps = [psnr(render(scene, cam, cfg.raster).color, tgt) for cam, tgt in views]
            ss = [ssim(render(scene, cam, cfg.raster).color, tgt) for cam, tgt in views]
            rows.append({"arm": arm, "seed": seed, "psnr": float(np.mean(ps)),
                         "ssim": float(np.mean(ss)), "n_primitives": scene.n})
    return rows


def cmd_ablate(args) -> int:
    seeds = list(range(args.seeds))
    cfg = parse_config(args.config) if args.config else None
    if cfg is not None:
        apply_overrides(cfg, args.set)
    rows = run_ablation(args.suite, seeds, base_cfg=cfg, init_n=args.init_random)
    _write_csv(args.out, rows)
    print("arm,mean_psnr,mean_ssim")
    for arm in ABLATION_ARMS:
        sub = [r for r in rows if r["arm"] == arm]
        print(f"{arm},{np.mean([r['psnr'] for r in sub]):.3f},"
              f"{np.mean([r['ssim'] for r in sub]):.5f}")
    return 0


def cmd_make_synthetic(args) -> int:
    spec = SyntheticSceneSpec()
    if args.spec:
        cp = __import__("configparser").ConfigParser()
        with open(args.spec) as f:
            cp.read_file(f)
        sec = cp["synthetic"] if cp.has_section("synthetic") else cp["DEFAULT"]
        for key in sec:
            if key == "view_resolution":
                spec.view_resolution = tuple(int(v) for v in sec[key].split())
            elif key in ("n_gaussians", "n_views", "seed"):
                setattr(spec, key, int(sec[key]))
            elif key == "scene_extent":
                spec.scene_extent = float(sec[key])
            elif key == "target_kind":
                spec.target_kind = sec[key].strip()
            else:
                raise KeyError(f"unknown synthetic spec key '{key}'")
    for field_name in ("n_gaussians", "n_views", "seed"):
        value = getattr(args, field_name, None)
        if value is not None:
            setattr(spec, field_name, value)
    out = make_synthetic(spec, args.out)
    print(f"wrote {len(out['cameras'])} views to {args.out}")
    return 0


def _write_csv(path, rows):
    if not rows:
        return
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)


def build_parser() -> _Parser:
    p = _Parser(prog="tinysplat", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a scene to a view directory")
    t.add_argument("--config", help="config file")
    t.add_argument("--views", required=True, help="directory with cam_*.txt and target_*")
    t.add_argument("--out", required=True, help="checkpoint directory")
    t.add_argument("--seed", type=int)
    t.add_argument("--deterministic", action="store_true")
    t.add_argument("--init-scene", help="PLY to start from")
    t.add_argument("--init-random", type=int, default=64, help="random init size")
    t.add_argument("--set", action="append", help="override section.key=value")
    t.set_defaults(fn=cmd_train)

    r = sub.add_parser("render", help="render a PLY through a camera file")
    r.add_argument("--scene", required=True)
    r.add_argument("--camera", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--dtype", default="float32", choices=("float32", "float64"))
    r.set_defaults(fn=cmd_render)

    e = sub.add_parser("eval", help="PSNR/SSIM of a PLY against stored targets")
    e.add_argument("--scene", required=True)
    e.add_argument("--views", required=True)
    e.add_argument("--dtype", default="float32", choices=("float32", "float64"))
    e.set_defaults(fn=cmd_eval)

    b = sub.add_parser("bench", help="time the raster paths")
    b.add_argument("--n", required=True, help="comma-separated primitive counts")
    b.add_argument("--out", required=True, help="CSV path")
    b.add_argument("--resolution", type=int, default=256)
    b.set_defaults(fn=cmd_bench)

    a = sub.add_parser("ablate", help="density-control ablation arms")
    a.add_argument("--suite", required=True, help="view directory from make-synthetic")
    a.add_argument("--seeds", type=int, default=3)
    a.add_argument("--out", required=True, help="CSV path")
    a.add_argument("--config", help="base config file")
    a.add_argument("--init-random", type=int, default=64)
    a.add_argument("--set", action="append")
    a.set_defaults(fn=cmd_ablate)

    m = sub.add_parser("make-synthetic", help="emit a synthetic training suite")
    m.add_argument("--spec", help="spec file with a [synthetic] section")
    m.add_argument("--out", required=True)
    m.add_argument("--n-gaussians", dest="n_gaussians", type=int)
    m.add_argument("--n-views", dest="n_views", type=int)
    m.add_argument("--seed", type=int)
    m.set_defaults(fn=cmd_make_synthetic)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except (TinysplatError, OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
