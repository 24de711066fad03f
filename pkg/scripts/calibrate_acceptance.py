"""Produce the frozen reference numbers for the acceptance suite.

Runs the standard synthetic fit on the float64 reference path and on the
default float32 path, measures the half-precision blend PSNR, and runs
the ablation arms. The printed values are copied into
tests/test_acceptance.py; re-run after any change that can move them.
"""
import sys
import time

import numpy as np

sys.path.insert(0, "tests")
from test_acceptance import ABLATE_SEEDS, ablation_suite, standard_fit, standard_scene

from tinysplat.cli import run_ablation
from tinysplat.forward import RasterConfig, forward
from tinysplat.metrics import psnr


def main():
    print("== standard fit, float64 reference ==")
    t0 = time.perf_counter()
    p64 = standard_fit("float64")
    print(f"reference psnr: {p64:.3f} dB  ({time.perf_counter() - t0:.0f}s)")

    print("== standard fit, float32 default ==")
    t0 = time.perf_counter()
    p32 = standard_fit("float32")
    print(f"default psnr: {p32:.3f} dB  ({time.perf_counter() - t0:.0f}s)")
    print(f"threshold (ref - 0.5): {p64 - 0.5:.3f}")

    print("== half-precision blend PSNR on the standard scene ==")
    scene, views = standard_scene()
    cam = views[0][0]
    full, _ = forward(scene, cam, RasterConfig())
    halfp, _ = forward(scene, cam, RasterConfig(), half=True)
    print(f"half-vs-fp32 psnr: {psnr(full.color.astype(np.float64), halfp.color.astype(np.float64)):.2f} dB")

    print("== ablation arms ==")
    t0 = time.perf_counter()
    suite_dir, cfg = ablation_suite()
    rows = run_ablation(suite_dir, list(range(ABLATE_SEEDS)), base_cfg=cfg, init_n=48)
    for arm in ("full", "no_decay", "no_var", "no_both"):
        vals = [r["psnr"] for r in rows if r["arm"] == arm]
        print(f"{arm}: mean {np.mean(vals):.3f}  per-seed {[f'{v:.2f}' for v in vals]}")
    print(f"({time.perf_counter() - t0:.0f}s)")


if __name__ == "__main__":
    main()
