"""Density-control ablation: {full, no_decay, no_var, no_both} x seeds.

    python scripts/run_ablation.py [suite_dir] [out.csv]

Generates the default synthetic suite if the directory does not exist.
"""
import sys
from pathlib import Path

from tinysplat.cli import main

suite = Path(sys.argv[1] if len(sys.argv) > 1 else "/tmp/tinysplat_suite")
out = sys.argv[2] if len(sys.argv) > 2 else "/tmp/tinysplat_ablation.csv"

if not suite.exists():
    rc = main(["make-synthetic", "--out", str(suite),
               "--n-gaussians", "256", "--n-views", "4", "--seed", "31"])
    assert rc == 0

cfg = suite / "ablate.cfg"
cfg.write_text("""\
[train]
epochs = 40

[lrs]
position = 0.0032
position_final = 3.2e-05
log_scale = 0.1
rotation = 0.02
color = 0.05
opacity_logit = 0.1

[densify]
budget = 256
""")
sys.exit(main(["ablate", "--suite", str(suite), "--seeds", "3", "--out", out,
               "--config", str(cfg), "--init-random", "48"]))
