"""Deterministic synthetic fixtures: scenes, captures, and planted outliers.

Captures mimic object-centric photo sessions: cameras on a jittered sphere of
radius 2.5 with a ~50 degree field of view, so the object fills roughly half
the frame. Initial poses are the ground truth corrupted by seeded noise, and
"outlier" views get a large extra rotation so detector experiments have an
unambiguous planted answer.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import rasterizer
from .cameras import (
    Camera,
    Intrinsics,
    Rotation,
    SE3Pose,
    geodesic_angle,
    look_at_pose,
    so3_exp,
)
from .gaussians import GaussianScene
from .optimize import ImageSet

CAPTURE_SCHEMA = "agscapture/1"
DEFAULT_RADIUS = 2.5
DEFAULT_FOV_DEG = 50.0
SCENE_STYLES = ("blob", "cluster", "ring")


@dataclass
class ViewRecord:
    gt_camera: Camera
    init_camera: Camera
    outlier: bool
    rot_noise_deg: float
    trans_noise: float
    image_path: str | None = None


@dataclass
class CaptureManifest:
    """Everything needed to reproduce and audit one synthetic capture."""

    seed: int
    radius: float
    views: list[ViewRecord] = field(default_factory=list)
    scene_path: str | None = None

    def n_outliers(self) -> int:
        return sum(1 for v in self.views if v.outlier)

    def to_dict(self) -> dict:
        from .cameras import camera_to_dict

        return {
            "schema": CAPTURE_SCHEMA,
            "seed": self.seed,
            "radius": self.radius,
            "scene": self.scene_path,
            "views": [
                {
                    "image": v.image_path,
                    "gt_camera": camera_to_dict(v.gt_camera),
                    "init_camera": camera_to_dict(v.init_camera),
                    "outlier": v.outlier,
                    "rot_noise_deg": v.rot_noise_deg,
                    "trans_noise": v.trans_noise,
                }
                for v in self.views
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "CaptureManifest":
        from .cameras import camera_from_dict

        if d.get("schema") != CAPTURE_SCHEMA:
            raise ValueError(f"unsupported capture schema {d.get('schema')!r}")
        manifest = CaptureManifest(seed=int(d["seed"]), radius=float(d["radius"]), scene_path=d.get("scene"))
        for v in d["views"]:
            manifest.views.append(
                ViewRecord(
                    gt_camera=camera_from_dict(v["gt_camera"]),
                    init_camera=camera_from_dict(v["init_camera"]),
                    outlier=bool(v["outlier"]),
                    rot_noise_deg=float(v["rot_noise_deg"]),
                    trans_noise=float(v["trans_noise"]),
                    image_path=v.get("image"),
                )
            )
        return manifest


def _hsv_to_rgb(h: float, s: float, v: float) -> np.ndarray:
    import colorsys

    return np.array(colorsys.hsv_to_rgb(h % 1.0, s, v))


def generate_scene(seed: int, n_gaussians: int, style: str = "cluster") -> GaussianScene:
    """Deterministic ground-truth scene inside the unit sphere.

    Styles: ``blob`` (one soft cloud), ``cluster`` (several color-coded
    clumps; the most pose-discriminative), ``ring`` (a flat hue-swept loop).
    """
    if n_gaussians < 1:
        raise ValueError("need at least one Gaussian")
    if style not in SCENE_STYLES:
        raise ValueError(f"unknown style {style!r}, expected one of {SCENE_STYLES}")
    rng = np.random.default_rng(seed)

    if style == "blob":
        means = rng.normal(scale=0.35, size=(n_gaussians, 3))
        colors = rng.uniform(0.1, 0.9, (n_gaussians, 3))
        scales = rng.uniform(0.06, 0.14, (n_gaussians, 3))
    elif style == "cluster":
        n_clusters = 6
        # centers on a radial shell so every scene has usable parallax
        dirs = rng.normal(size=(n_clusters, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        centers = dirs * rng.uniform(0.42, 0.66, (n_clusters, 1))
        # evenly spread hues keep opposite sides of the object distinguishable
        hues = (np.arange(n_clusters) / n_clusters + rng.uniform(0, 1)) % 1.0
        palette = np.stack([_hsv_to_rgb(h, rng.uniform(0.65, 1.0), rng.uniform(0.55, 1.0))
                            for h in hues])
        assign = rng.integers(0, n_clusters, n_gaussians)
        means = centers[assign] + rng.normal(scale=0.12, size=(n_gaussians, 3))
        colors = np.clip(palette[assign] + rng.normal(scale=0.05, size=(n_gaussians, 3)), 0.0, 1.0)
        scales = rng.uniform(0.05, 0.12, (n_gaussians, 3))
    else:  # ring
        phi = rng.uniform(0.0, 2.0 * math.pi, n_gaussians)
        tube = rng.normal(scale=0.08, size=(n_gaussians, 3))
        means = np.stack([0.6 * np.cos(phi), 0.6 * np.sin(phi), np.zeros(n_gaussians)], axis=1) + tube
        colors = np.stack(
            [0.5 + 0.45 * np.cos(phi), 0.5 + 0.45 * np.sin(phi), 0.5 + 0.45 * np.cos(2 * phi)],
            axis=1,
        )
        scales = rng.uniform(0.05, 0.11, (n_gaussians, 3))

    norms = np.linalg.norm(means, axis=1, keepdims=True)
    means = np.where(norms > 0.95, means * (0.95 / norms), means)
    return GaussianScene(
        means=means,
        log_scales=np.log(scales),
        orientations=rng.normal(size=(n_gaussians, 4)),
        opacity_logits=rng.uniform(1.0, 2.5, n_gaussians),
        colors=colors,
        background=np.ones(3),
    )


def _perturb_camera(
    cam: Camera, rng: np.random.Generator, rot_deg: float, trans: float,
    viewpoint_axis: bool = False,
) -> tuple[Camera, float, float]:
    """Rotate by the given magnitude about a random axis; shift the center by N(0, trans^2 I).

    ``viewpoint_axis`` restricts the axis to the plane perpendicular to the
    optical axis, producing viewpoint-changing errors like the front/back and
    symmetry confusions real pose estimators make (a pure in-plane roll is a
    failure mode they essentially never produce).
    """
    axis = rng.normal(size=3)
    if viewpoint_axis:
        optical = cam.pose.rotation.m[2]
        axis -= (axis @ optical) * optical
    axis /= np.linalg.norm(axis)
    r_new = so3_exp(axis * math.radians(rot_deg)) @ cam.pose.rotation.m
    delta_c = rng.normal(scale=trans, size=3) if trans > 0 else np.zeros(3)
    c_new = cam.pose.camera_center() + delta_c
    pose = SE3Pose(Rotation(r_new), -r_new @ c_new)
    return Camera(pose, cam.intrinsics), rot_deg, float(np.linalg.norm(delta_c))


def generate_capture(
    scene: GaussianScene,
    n_views: int,
    rot_noise_deg: float = 0.0,
    trans_noise: float = 0.0,
    n_outliers: int = 0,
    outlier_min_deg: float = 45.0,
    seed: int = 0,
    width: int = 64,
    height: int = 64,
    fov_deg: float = DEFAULT_FOV_DEG,
    radius: float = DEFAULT_RADIUS,
) -> tuple[ImageSet, list[Camera], list[Camera], CaptureManifest]:
    """Render a multi-view capture with noisy initial poses and planted outliers.

    Ground-truth cameras sit on a jittered Fibonacci sphere; every image is a
    ground-truth rendering. Initial cameras perturb the truth: regular views
    get rotation noise of magnitude |N(0, rot_noise_deg^2)| (clipped just
    below the outlier floor so labels stay unambiguous) and outlier views get
    one rotation drawn from [outlier_min_deg, 90]. The manifest records the
    injected magnitudes, which equal the geodesic/center deviations between
    the two camera sets.
    """
    if n_views < 2:
        raise ValueError("need at least two views")
    if n_outliers >= n_views:
        raise ValueError("outliers must be fewer than views")
    rng = np.random.default_rng(seed)
    intr = Intrinsics.from_fov(width, height, fov_deg)

    gt_cams: list[Camera] = []
    golden = math.pi * (3.0 - math.sqrt(5.0))
    for k in range(n_views):
        z = 1.0 - 2.0 * (k + 0.5) / n_views
        direction = np.array(
            [math.sqrt(1 - z * z) * math.cos(k * golden), math.sqrt(1 - z * z) * math.sin(k * golden), z]
        )
        direction += rng.normal(scale=0.12, size=3)
        direction /= np.linalg.norm(direction)
        r_k = radius * (1.0 + rng.uniform(-0.05, 0.05))
        gt_cams.append(Camera(look_at_pose(r_k * direction, np.zeros(3)), intr))

    rgbs, alphas = [], []
    for cam in gt_cams:
        out = rasterizer.render(scene, cam)
        rgbs.append(out.rgb)
        alphas.append(out.alpha)
    images = ImageSet(np.stack(rgbs), np.stack(alphas))

    outlier_set = set(rng.choice(n_views, size=n_outliers, replace=False).tolist()) if n_outliers else set()
    init_cams: list[Camera] = []
    manifest = CaptureManifest(seed=seed, radius=radius)
    for i, cam in enumerate(gt_cams):
        if i in outlier_set:
            rot_deg = float(rng.uniform(outlier_min_deg, 90.0))
        elif rot_noise_deg > 0:
            rot_deg = min(abs(float(rng.normal(scale=rot_noise_deg))), 0.98 * outlier_min_deg)
        else:
            rot_deg = 0.0
        if rot_deg == 0.0 and trans_noise == 0.0:
            init, t_mag = cam, 0.0
        else:
            init, rot_deg, t_mag = _perturb_camera(
                cam, rng, rot_deg, trans_noise, viewpoint_axis=i in outlier_set
            )
        init_cams.append(init)
        manifest.views.append(
            ViewRecord(
                gt_camera=cam,
                init_camera=init,
                outlier=i in outlier_set,
                rot_noise_deg=rot_deg,
                trans_noise=t_mag,
            )
        )
    return images, gt_cams, init_cams, manifest


def measured_noise(manifest: CaptureManifest) -> list[tuple[float, float]]:
    """Re-derive (rotation deg, center shift) between gt and init cameras."""
    out = []
    for v in manifest.views:
        ang = math.degrees(geodesic_angle(v.gt_camera.pose.rotation.m, v.init_camera.pose.rotation.m))
        shift = float(np.linalg.norm(v.gt_camera.center() - v.init_camera.center()))
        out.append((ang, shift))
    return out


def save_capture(out_dir: str, images: ImageSet, manifest: CaptureManifest,
                 scene: GaussianScene | None = None) -> str:
    """Write a capture directory: RGBA PNGs, scene file, poses, manifest JSON."""
    from .cameras import save_cameras
    from .gaussians import save_scene
    from .images import save_image

    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    for i, view in enumerate(manifest.views):
        rel = os.path.join("images", f"view_{i:03d}.png")
        save_image(os.path.join(out_dir, rel), images.images[i], images.alphas[i])
        view.image_path = rel
    if scene is not None:
        save_scene(os.path.join(out_dir, "scene.ags"), scene)
        manifest.scene_path = "scene.ags"
    save_cameras(os.path.join(out_dir, "gt_poses.json"), [v.gt_camera for v in manifest.views])
    save_cameras(os.path.join(out_dir, "init_poses.json"), [v.init_camera for v in manifest.views])
    manifest_path = os.path.join(out_dir, "manifest.json")
    tmp = manifest_path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(manifest.to_dict(), f, indent=1)
    os.replace(tmp, manifest_path)
    return manifest_path


def load_capture(capture_dir: str) -> tuple[ImageSet, CaptureManifest]:
    from .images import load_image

    with open(os.path.join(capture_dir, "manifest.json")) as f:
        manifest = CaptureManifest.from_dict(json.load(f))
    rgbs, alphas = [], []
    for v in manifest.views:
        rgb, alpha = load_image(os.path.join(capture_dir, v.image_path))
        rgbs.append(rgb)
        alphas.append(alpha)
    return ImageSet(np.stack(rgbs), np.stack(alphas)), manifest
