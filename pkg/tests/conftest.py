import numpy as np
import pytest

from tinysplat.camera import CameraView, look_at
from tinysplat.scene import SceneSoA


def make_camera(resolution=(32, 32), eye=(0.6, 0.4, -2.5), target=(0, 0, 0),
                focal=40.0, near=0.1, far=50.0):
    W, H = resolution
    return CameraView(
        world_to_camera=look_at(eye, target),
        focal=(focal, focal),
        principal_point=((W - 1) / 2.0, (H - 1) / 2.0),
        resolution=resolution,
        near=near, far=far,
    )


def make_scene(n, rng, extent=0.3, scale_range=(0.08, 0.2),
               opacity_range=(-0.5, 1.0)):
    """Random scene whose Gaussians sit well inside the demo camera's view."""
    return SceneSoA(
        position=rng.uniform(-extent, extent, (n, 3)),
        log_scale=np.log(rng.uniform(*scale_range, (n, 3))),
        rotation=rng.normal(size=(n, 4)),
        color=rng.uniform(-1.0, 1.0, (n, 3)),
        opacity_logit=rng.uniform(*opacity_range, n),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def camera32():
    return make_camera((32, 32))


@pytest.fixture
def small_scene(rng):
    return make_scene(8, rng)
