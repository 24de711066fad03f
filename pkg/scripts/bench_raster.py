"""Raster path timings (scanline vs per-pixel, culling on/off).

    python scripts/bench_raster.py [counts] [out.csv]

Ratios are the headline; absolute times are machine-local.
"""
import sys

from tinysplat.cli import main

counts = sys.argv[1] if len(sys.argv) > 1 else "2000,20000,50000"
out = sys.argv[2] if len(sys.argv) > 2 else "/tmp/tinysplat_bench.csv"
sys.exit(main(["bench", "--n", counts, "--out", out, "--resolution", "256"]))
