import numpy as np
import pytest

from tinysplat.cli import main
from tinysplat.configio import apply_overrides, emit_config, parse_config
from tinysplat.images import load_image, save_image
from tinysplat.scene import SceneSoA, save_ply
from tinysplat.synthetic import SyntheticSceneSpec, make_synthetic
from tinysplat.train import TrainConfig

from conftest import make_camera


def test_image_roundtrip_png(tmp_path, rng):
    img = rng.random((20, 30, 3))
    save_image(img, tmp_path / "x.png")
    back = load_image(tmp_path / "x.png")
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-9


def test_image_roundtrip_ppm(tmp_path, rng):
    img = rng.random((14, 9, 3))
    save_image(img, tmp_path / "x.ppm")
    back = load_image(tmp_path / "x.ppm")
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-9
    assert (tmp_path / "x.ppm").read_bytes().startswith(b"P6\n9 14\n255\n")


def test_make_synthetic_deterministic(tmp_path):
    spec = SyntheticSceneSpec(n_gaussians=32, n_views=2, view_resolution=(32, 32), seed=5)
    a = make_synthetic(spec, tmp_path / "a")
    b = make_synthetic(spec, tmp_path / "b")
    for fa, fb in zip(a["cameras"] + a["targets"] + [a["scene"]],
                      b["cameras"] + b["targets"] + [b["scene"]]):
        assert fa.read_bytes() == fb.read_bytes()


def test_make_synthetic_self_consistent(tmp_path):
    # re-render from the emitted PLY + cameras: byte-identical target PNGs
    from tinysplat.camera import load_camera
    from tinysplat.forward import render
    from tinysplat.scene import load_ply
    from tinysplat.synthetic import REFERENCE_RASTER

    spec = SyntheticSceneSpec(n_gaussians=24, n_views=2, view_resolution=(32, 32), seed=8)
    out = make_synthetic(spec, tmp_path / "s")
    scene = load_ply(out["scene"])
    for cam_path, tgt_path in zip(out["cameras"], out["targets"]):
        cam = load_camera(cam_path)
        img = render(scene, cam, REFERENCE_RASTER).color
        redo = tmp_path / "redo.png"
        save_image(img, redo)
        assert redo.read_bytes() == tgt_path.read_bytes()


def test_make_synthetic_single_view(tmp_path):
    spec = SyntheticSceneSpec(n_gaussians=8, n_views=1, view_resolution=(32, 32), seed=1)
    out = make_synthetic(spec, tmp_path / "one")
    assert len(out["cameras"]) == 1


def test_config_roundtrip(tmp_path):
    cfg = TrainConfig()
    cfg.epochs = 17
    cfg.densify.budget = 99
    cfg.raster.dtype = "float64"
    cfg.lrs.color = 0.123
    text = emit_config(cfg)
    path = tmp_path / "run.cfg"
    path.write_text(text)
    back = parse_config(path)
    assert back == cfg
    assert emit_config(back) == text


def test_config_overrides(tmp_path):
    cfg = TrainConfig()
    apply_overrides(cfg, ["densify.budget=512", "train.epochs=3", "raster.kernel=naive"])
    assert cfg.densify.budget == 512
    assert cfg.epochs == 3
    assert cfg.raster.kernel == "naive"
    with pytest.raises(KeyError):
        apply_overrides(cfg, ["nonsense=1"])


def test_cli_render_empty_ply(tmp_path, capsys):
    from tinysplat.camera import save_camera
    save_ply(SceneSoA.empty(), tmp_path / "empty.ply")
    save_camera(make_camera((24, 16)), tmp_path / "cam.txt")
    rc = main(["render", "--scene", str(tmp_path / "empty.ply"),
               "--camera", str(tmp_path / "cam.txt"),
               "--out", str(tmp_path / "img.png")])
    assert rc == 0
    img = load_image(tmp_path / "img.png")
    assert img.shape == (16, 24, 3)
    assert np.all(img == 0.0)


def test_cli_eval_perfect_scene(tmp_path, capsys):
    spec = SyntheticSceneSpec(n_gaussians=16, n_views=2, view_resolution=(32, 32), seed=3)
    out = make_synthetic(spec, tmp_path / "suite")
    rc = main(["eval", "--scene", str(out["scene"]), "--views", str(tmp_path / "suite"),
               "--dtype", "float64"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "view,psnr,ssim"
    # targets are 8-bit quantized; ssim of the re-render stays ~1
    mean_row = lines[-1].split(",")
    assert float(mean_row[2]) > 0.999


def test_cli_usage_error_exit_1(capsys):
    assert main(["train"]) == 1  # missing required flags
    assert "usage error" in capsys.readouterr().err


def test_cli_runtime_error_exit_2(tmp_path, capsys):
    rc = main(["render", "--scene", str(tmp_path / "missing.ply"),
               "--camera", str(tmp_path / "nope.txt"), "--out", str(tmp_path / "x.png")])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_cli_train_and_eval_smoke(tmp_path, capsys):
    spec = SyntheticSceneSpec(n_gaussians=24, n_views=2, view_resolution=(32, 32), seed=2)
    make_synthetic(spec, tmp_path / "suite")
    cfg = tmp_path / "cfg.ini"
    cfg.write_text(
        "[train]\nepochs = 2\n[densify]\nbudget = 32\n"
        "[lrs]\ncolor = 0.05\nopacity_logit = 0.1\n")
    rc = main(["train", "--config", str(cfg), "--views", str(tmp_path / "suite"),
               "--out", str(tmp_path / "ckpt"), "--seed", "4", "--deterministic",
               "--init-random", "16"])
    assert rc == 0
    assert (tmp_path / "ckpt" / "scene.ply").exists()
    assert (tmp_path / "ckpt" / "metrics.csv").exists()
    manifest = tmp_path / "ckpt" / "manifest.cfg"
    back = parse_config(manifest)
    assert back.epochs == 2 and back.densify.budget == 32 and back.seed == 4
    rc = main(["eval", "--scene", str(tmp_path / "ckpt" / "scene.ply"),
               "--views", str(tmp_path / "suite")])
    assert rc == 0


def test_cli_make_synthetic_command(tmp_path):
    rc = main(["make-synthetic", "--out", str(tmp_path / "suite"),
               "--n-gaussians", "8", "--n-views", "1", "--seed", "6"])
    assert rc == 0
    assert (tmp_path / "suite" / "cam_000.txt").exists()
    assert (tmp_path / "suite" / "target_000.png").exists()


def test_cli_bench_smoke(tmp_path, capsys):
    rc = main(["bench", "--n", "64", "--out", str(tmp_path / "bench.csv"),
               "--resolution", "64"])
    assert rc == 0
    text = (tmp_path / "bench.csv").read_text()
    assert "forward_scanline_ms" in text.splitlines()[0]
