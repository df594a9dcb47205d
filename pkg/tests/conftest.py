import math

import numpy as np
import pytest

from ags.cameras import Camera, Intrinsics, Rotation, SE3Pose, look_at_pose, so3_exp
from ags.gaussians import GaussianScene


def random_rotation(rng) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return so3_exp(axis * rng.uniform(0, math.pi * 0.9))


def random_pose(rng) -> SE3Pose:
    return SE3Pose(Rotation(random_rotation(rng)), rng.normal(scale=2.0, size=3))


def random_scene(rng, n, scale_lo=0.04, scale_hi=0.15, logit_hi=2.0) -> GaussianScene:
    """Small in-view test scene; opacities kept clear of the 0.999 clamp."""
    return GaussianScene(
        means=rng.uniform(-0.5, 0.5, (n, 3)),
        log_scales=rng.uniform(np.log(scale_lo), np.log(scale_hi), (n, 3)),
        orientations=rng.normal(size=(n, 4)),
        opacity_logits=rng.uniform(-1.0, logit_hi, n),
        colors=rng.uniform(0.05, 0.95, (n, 3)),
        background=np.ones(3),
    )


def make_camera(resolution=32, fov=50.0, seed=0) -> Camera:
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    return Camera(
        look_at_pose(2.5 * direction, np.zeros(3)),
        Intrinsics.from_fov(resolution, resolution, fov),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(42)
