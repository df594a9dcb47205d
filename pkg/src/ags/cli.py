"""Command-line surface: dataset generation, reconstruction, evaluation, pose search.

Exit statuses: 0 success, 1 configuration/validation error, 2 runtime
failure. All artifact files are written atomically (temp file then rename).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from . import meshing, rasterizer, synthetic
from .cameras import Camera, load_cameras, save_cameras
from .diffusion import NoiseSchedule, OraclePriorBackend, PriorBackend, RemotePriorBackend
from .gaussians import load_scene, save_scene
from .images import load_image
from .metrics import (
    DEFAULT_CC_THRESHOLD,
    DEFAULT_F1_THRESHOLD,
    DEFAULT_ROT_THRESHOLDS_DEG,
    MetricsSummary,
    camera_center_accuracy,
    mesh_f1,
    perceptual_proxy,
    psnr,
    rotation_accuracy,
)
from .optimize import (
    OutlierConfig,
    ReconstructionConfig,
    correct_outlier_pose,
    run_pipeline,
)

CONFIG_SCHEMA = "agsconfig/1"
PRIOR_URL_ENV = "AGS_PRIOR_URL"


class ConfigError(ValueError):
    """Invalid configuration; maps to exit status 1."""


@dataclass(frozen=True)
class RunConfig:
    """Merged view of the config file and command-line overrides."""

    steps: int = 500
    n_gaussians: int = 4096
    lr_means: float = 2e-3
    lr_log_scales: float = 5e-3
    lr_orientations: float = 2e-3
    lr_opacities: float = 5e-2
    lr_colors: float = 2.5e-2
    lr_pose: float = 3e-3
    lambda_photo: float = 1e4
    lambda_sds: float = 1.0
    sds_enabled: bool = True
    pose_opt_enabled: bool = True
    seed: int = 0
    outlier_delta: float = 0.05
    min_inliers: int | None = None
    outer_iters: int = 3
    probe_steps: int = 300
    probe_repeats: int = 2
    n_candidates: int = 256
    refine_steps: int = 100
    prior: str = "oracle"
    threads: int = 1

    def reconstruction_config(self) -> ReconstructionConfig:
        return ReconstructionConfig(
            steps=self.steps, n_gaussians=self.n_gaussians,
            lr_means=self.lr_means, lr_log_scales=self.lr_log_scales,
            lr_orientations=self.lr_orientations, lr_opacities=self.lr_opacities,
            lr_colors=self.lr_colors, lr_pose=self.lr_pose,
            lambda_photo=self.lambda_photo, lambda_sds=self.lambda_sds,
            sds_enabled=self.sds_enabled, pose_opt_enabled=self.pose_opt_enabled,
            seed=self.seed,
        )

    def outlier_config(self) -> OutlierConfig:
        return OutlierConfig(
            delta=self.outlier_delta, min_inliers=self.min_inliers,
            outer_iters=self.outer_iters, probe_steps=self.probe_steps,
            probe_repeats=self.probe_repeats,
        )


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}
_BOOL_KEYS = {"sds_enabled", "pose_opt_enabled"}
_INT_KEYS = {"steps", "n_gaussians", "seed", "min_inliers", "outer_iters",
             "probe_steps", "probe_repeats", "n_candidates", "refine_steps", "threads"}


def parse_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig: documented defaults, then file values, then flags.

    Unknown keys and ill-typed values are rejected by name.
    """
    values: dict = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path) as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        schema = data.pop("schema", CONFIG_SCHEMA)
        if schema != CONFIG_SCHEMA:
            raise ConfigError(f"unsupported config schema {schema!r}, expected {CONFIG_SCHEMA!r}")
        values.update(data)
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val

    cfg_kwargs = {}
    for key, val in values.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            if key == "min_inliers" and val is None:
                cfg_kwargs[key] = None
            elif key in _BOOL_KEYS:
                if isinstance(val, str):
                    val = {"true": True, "false": False}[val.lower()]
                cfg_kwargs[key] = bool(val)
            elif key in _INT_KEYS:
                cfg_kwargs[key] = int(val)
            elif key == "prior":
                cfg_kwargs[key] = str(val)
            else:
                cfg_kwargs[key] = float(val)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid value for config key {key!r}: {val!r}") from exc

    cfg = RunConfig(**cfg_kwargs)
    if cfg.steps < 0:
        raise ConfigError("invalid value for config key 'steps': must be >= 0")
    if cfg.prior != "oracle" and not cfg.prior.startswith("remote:"):
        raise ConfigError("invalid value for config key 'prior': expected 'oracle' or 'remote:URL'")
    return cfg


def _build_prior(cfg: RunConfig, capture_dir: str | None) -> PriorBackend:
    if cfg.prior.startswith("remote:"):
        return RemotePriorBackend(cfg.prior[len("remote:"):], max_in_flight=max(1, cfg.threads))
    if capture_dir is None:
        raise ConfigError("the oracle prior needs a capture directory with a ground-truth scene")
    images, manifest = synthetic.load_capture(capture_dir)
    if manifest.scene_path is None:
        raise ConfigError(f"capture {capture_dir} has no ground-truth scene for the oracle prior")
    gt_scene = load_scene(os.path.join(capture_dir, manifest.scene_path))
    gt_cams = [v.gt_camera for v in manifest.views]
    return OraclePriorBackend(gt_scene, list(images.images), gt_cams, NoiseSchedule())


def _write_json_atomic(path: str, payload: dict) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
    os.replace(tmp, path)


def _cmd_generate(args, cfg: RunConfig) -> int:
    scene = synthetic.generate_scene(cfg.seed, args.scene_gaussians, args.style)
    images, _, _, manifest = synthetic.generate_capture(
        scene,
        n_views=args.n_views,
        rot_noise_deg=args.rot_noise,
        trans_noise=args.trans_noise,
        n_outliers=args.outliers,
        outlier_min_deg=args.outlier_min_deg,
        seed=cfg.seed,
        width=args.resolution,
        height=args.resolution,
    )
    os.makedirs(args.out, exist_ok=True)
    synthetic.save_capture(args.out, images, manifest, scene)
    print(f"wrote capture with {len(manifest.views)} views to {args.out}")
    return 0


def _load_capture_inputs(capture_dir: str):
    """Capture PNGs carry white-composited color in RGB and the mask in alpha."""
    if not os.path.isdir(capture_dir):
        raise ConfigError(f"capture directory not found: {capture_dir}")
    return synthetic.load_capture(capture_dir)


def _cmd_reconstruct(args, cfg: RunConfig) -> int:
    images, manifest = _load_capture_inputs(args.capture)
    if args.poses:
        if not os.path.exists(args.poses):
            raise ConfigError(f"poses file not found: {args.poses}")
        init_cams = load_cameras(args.poses)
    else:
        init_cams = [v.init_camera for v in manifest.views]
    if len(init_cams) != len(images):
        raise ConfigError("pose count does not match image count")
    prior = _build_prior(cfg, args.capture) if cfg.sds_enabled else None
    scene, cams, report = run_pipeline(
        images, init_cams, cfg.reconstruction_config(), cfg.outlier_config(), prior
    )
    os.makedirs(args.out, exist_ok=True)
    scene_path = os.path.join(args.out, "scene.ags")
    save_scene(scene_path, scene)
    save_cameras(os.path.join(args.out, "poses.json"), cams)
    report.final_scene_path = scene_path
    _write_json_atomic(os.path.join(args.out, "report.json"), report.to_dict())
    if args.novel_strip:
        _write_novel_strip(os.path.join(args.out, "novel_views.png"), scene, cams)
    print(f"reconstruction artifacts written to {args.out}")
    return 0


def _write_novel_strip(path: str, scene, cams: list[Camera], n_views: int = 6) -> None:
    from .cameras import sample_sphere_poses
    from .images import save_image

    radius = float(np.median([np.linalg.norm(c.center()) for c in cams]))
    poses = sample_sphere_poses(n_views, radius, np.zeros(3))
    strips = [rasterizer.render(scene, Camera(p, cams[0].intrinsics)).rgb for p in poses]
    save_image(path, np.concatenate(strips, axis=1))


def _cmd_evaluate(args, cfg: RunConfig) -> int:
    images, manifest = _load_capture_inputs(args.capture)
    gt_cams = [v.gt_camera for v in manifest.views]
    if not os.path.exists(args.poses):
        raise ConfigError(f"poses file not found: {args.poses}")
    pred_cams = load_cameras(args.poses)
    if len(pred_cams) != len(gt_cams):
        raise ConfigError("predicted pose count does not match the capture")

    summary = MetricsSummary()
    for tau in DEFAULT_ROT_THRESHOLDS_DEG:
        summary.rot_acc[tau] = rotation_accuracy(pred_cams, gt_cams, tau)
    summary.cc_acc = camera_center_accuracy(pred_cams, gt_cams, DEFAULT_CC_THRESHOLD)

    if args.scene:
        if not os.path.exists(args.scene):
            raise ConfigError(f"scene file not found: {args.scene}")
        scene = load_scene(args.scene)
        psnrs, proxies = [], []
        for i, cam in enumerate(pred_cams):
            rendered = rasterizer.render(scene, cam).rgb
            psnrs.append(psnr(rendered, images.images[i]))
            proxies.append(perceptual_proxy(rendered, images.images[i]))
        summary.psnr = float(np.mean(psnrs))
        summary.proxy = float(np.mean(proxies))
        if manifest.scene_path:
            gt_scene = load_scene(os.path.join(args.capture, manifest.scene_path))
            pred_mesh = meshing.extract_mesh(scene)
            gt_mesh = meshing.extract_mesh(gt_scene)
            diag = float(np.linalg.norm(gt_mesh.vertices.max(0) - gt_mesh.vertices.min(0))) if not gt_mesh.is_empty() else 1.0
            summary.f1[DEFAULT_F1_THRESHOLD] = mesh_f1(
                pred_mesh, gt_mesh, tau=DEFAULT_F1_THRESHOLD * diag, n_samples=20000, seed=cfg.seed
            )
    _write_json_atomic(args.out, summary.to_dict())
    print(f"metrics written to {args.out}")
    return 0


def _cmd_search_pose(args, cfg: RunConfig) -> int:
    if not os.path.exists(args.scene):
        raise ConfigError(f"scene file not found: {args.scene}")
    if not os.path.exists(args.image):
        raise ConfigError(f"image file not found: {args.image}")
    if not os.path.exists(args.poses):
        raise ConfigError(f"poses file not found: {args.poses}")
    scene = load_scene(args.scene)
    rgb, alpha = load_image(args.image)
    reference = load_cameras(args.poses)
    if not reference:
        raise ConfigError(f"poses file {args.poses} holds no cameras")
    cam = correct_outlier_pose(
        scene, rgb, alpha, reference[0].intrinsics,
        reference, n_candidates=cfg.n_candidates, refine_steps=cfg.refine_steps,
    )
    save_cameras(args.out, [cam])
    print(f"corrected pose written to {args.out}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse usage errors to exit status 1
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ags", description=__doc__)
    parser.add_argument("--config", help="JSON config file (schema agsconfig/1)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--steps", type=int)
    parser.add_argument("--prior", help="oracle or remote:URL (env AGS_PRIOR_URL as fallback)")
    parser.add_argument("--threads", type=int)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render a synthetic capture with noisy poses")
    p.add_argument("--out", required=True)
    p.add_argument("--n-views", type=int, default=8)
    p.add_argument("--style", default="cluster", choices=synthetic.SCENE_STYLES)
    p.add_argument("--scene-gaussians", type=int, default=48)
    p.add_argument("--rot-noise", type=float, default=5.0)
    p.add_argument("--trans-noise", type=float, default=0.02)
    p.add_argument("--outliers", type=int, default=0)
    p.add_argument("--outlier-min-deg", type=float, default=45.0)
    p.add_argument("--resolution", type=int, default=64)

    p = sub.add_parser("reconstruct", help="run the full pipeline on a capture")
    p.add_argument("--capture", required=True)
    p.add_argument("--poses", help="initial poses JSON; defaults to the capture's init poses")
    p.add_argument("--out", required=True)
    p.add_argument("--novel-strip", action="store_true", help="also write a novel-view PNG strip")

    p = sub.add_parser("evaluate", help="score predicted poses (and optional scene) against ground truth")
    p.add_argument("--capture", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--scene")
    p.add_argument("--out", required=True)

    p = sub.add_parser("search-pose", help="render-and-compare pose recovery for one image")
    p.add_argument("--scene", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--poses", required=True, help="reference cameras defining the search sphere")
    p.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = build_parser().parse_args(argv)
        overrides = {"seed": args.seed, "steps": args.steps, "threads": args.threads,
                     "prior": args.prior}
        if overrides["prior"] is None and os.environ.get(PRIOR_URL_ENV):
            overrides["prior"] = f"remote:{os.environ[PRIOR_URL_ENV]}"
        cfg = parse_config(args.config, overrides)
        handler = {
            "generate": _cmd_generate,
            "reconstruct": _cmd_reconstruct,
            "evaluate": _cmd_evaluate,
            "search-pose": _cmd_search_pose,
        }[args.command]
        return handler(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
