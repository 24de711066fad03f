"""End-to-end demo: generate a synthetic suite, fit it, report metrics.

    python scripts/fit_synthetic.py [out_dir]
"""
import sys
from pathlib import Path

from tinysplat.cli import main

out = Path(sys.argv[1] if len(sys.argv) > 1 else "/tmp/tinysplat_demo")
suite = out / "suite"
ckpt = out / "ckpt"

rc = main(["make-synthetic", "--out", str(suite),
           "--n-gaussians", "256", "--n-views", "4", "--seed", "0"])
assert rc == 0

cfg = out / "fit.cfg"
cfg.parent.mkdir(parents=True, exist_ok=True)
cfg.write_text("""\
[train]
epochs = 40
seed = 0

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

rc = main(["train", "--config", str(cfg), "--views", str(suite),
           "--out", str(ckpt), "--deterministic", "--init-random", "48"])
assert rc == 0

rc = main(["eval", "--scene", str(ckpt / "scene.ply"), "--views", str(suite)])
sys.exit(rc)
