"""Diffusion-side quantities and the score-distillation gradient.

Everything here works directly in pixel space: the forward-noising formula
z_t = sqrt(abar_t) x + sqrt(1 - abar_t) eps, a pluggable noise-prediction
backend, and the multi-view distillation gradient that averages per-input
noise predictions sharing one timestep and one noise draw.

Two backends ship with the package: an analytic oracle that answers queries
as a perfect view-conditioned model would if it knew the ground-truth scene
(used for all desk-scale experiments), and an HTTP client for the remote
noise-prediction protocol.
"""

from __future__ import annotations

import base64
import hashlib
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .cameras import Camera, Intrinsics, RelativeCameraEncoding, SE3Pose, encode_relative_camera
from .gaussians import GaussianScene

DEFAULT_TIMESTEPS = 1000
BETA_MIN = 1e-4
BETA_MAX = 2e-2
WIRE_CLAMP = 10.0


class PriorUnavailableError(RuntimeError):
    """A noise-prediction backend could not answer a query."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal-retention table of a linear-beta forward process."""

    timesteps: int = DEFAULT_TIMESTEPS
    alpha_bar: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.timesteps < 1:
            raise ValueError("need at least one timestep")
        if self.alpha_bar is None:
            betas = np.linspace(BETA_MIN, BETA_MAX, self.timesteps)
            object.__setattr__(self, "alpha_bar", np.cumprod(1.0 - betas))
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.shape != (self.timesteps,):
            raise ValueError("alpha_bar length must equal timesteps")
        if not (np.all(ab > 0) and np.all(ab < 1) and np.all(np.diff(ab) < 0)):
            raise ValueError("alpha_bar must be strictly decreasing within (0, 1)")
        object.__setattr__(self, "alpha_bar", ab)

    def alpha_bar_at(self, t: int) -> float:
        """abar_t for a 1-based timestep index."""
        if not 1 <= t <= self.timesteps:
            raise ValueError(f"timestep {t} outside [1, {self.timesteps}]")
        return float(self.alpha_bar[t - 1])

    def sds_weight(self, t: int) -> float:
        """Per-timestep gradient weight; vanishes as t -> 0."""
        return 1.0 - self.alpha_bar_at(t)


def add_noise(image: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Forward-noise an image: sqrt(abar_t) x + sqrt(1-abar_t) eps."""
    image = np.asarray(image, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if image.shape != eps.shape:
        raise ValueError(f"shape mismatch: image {image.shape} vs eps {eps.shape}")
    ab = sched.alpha_bar_at(t)
    return np.sqrt(ab) * image + np.sqrt(1.0 - ab) * eps


@dataclass(frozen=True)
class PriorQuery:
    """One noise-prediction request: noisy target view plus conditioning."""

    z_t: np.ndarray
    t: int
    cond_image: np.ndarray
    rel_cam: RelativeCameraEncoding

    def __post_init__(self):
        z = np.asarray(self.z_t, dtype=np.float64)
        c = np.asarray(self.cond_image, dtype=np.float64)
        if z.ndim != 3 or z.shape[2] != 3:
            raise ValueError(f"z_t must be HxWx3, got {z.shape}")
        if c.shape != z.shape:
            raise ValueError(f"cond_image shape {c.shape} must match z_t {z.shape}")
        object.__setattr__(self, "z_t", z)
        object.__setattr__(self, "cond_image", c)


@dataclass(frozen=True)
class PriorResponse:
    eps_hat: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.eps_hat, dtype=np.float64)
        if not np.all(np.isfinite(e)):
            raise ValueError("predicted noise has non-finite entries")
        object.__setattr__(self, "eps_hat", e)


class PriorBackend(ABC):
    """Noise-prediction model interface.

    Implementations must tolerate concurrent ``predict`` calls up to
    ``max_in_flight``; callers must not rely on response ordering.
    """

    max_in_flight: int = 4

    @property
    @abstractmethod
    def identity(self) -> str:
        ...

    @property
    def deterministic(self) -> bool:
        return True

    @abstractmethod
    def predict(self, query: PriorQuery) -> PriorResponse:
        ...


def oracle_predict(query: PriorQuery, gt_render: np.ndarray, sched: NoiseSchedule) -> PriorResponse:
    """The noise a perfect model would predict if the true view were ``gt_render``.

    Inverts the forward-noising formula around the ground-truth image:
    eps_hat = (z_t - sqrt(abar_t) gt) / sqrt(1 - abar_t). When z_t was built
    from gt_render itself this returns the injected noise exactly.
    """
    gt = np.asarray(gt_render, dtype=np.float64)
    if gt.shape != query.z_t.shape:
        raise ValueError(f"gt_render shape {gt.shape} must match z_t {query.z_t.shape}")
    ab = sched.alpha_bar_at(query.t)
    return PriorResponse((query.z_t - np.sqrt(ab) * gt) / np.sqrt(1.0 - ab))


def _image_key(img: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(img, dtype=np.float64).tobytes()).hexdigest()


class OraclePriorBackend(PriorBackend):
    """Analytic test-time prior backed by the ground-truth scene.

    The backend recognizes each conditioning image by content hash, recovers
    the queried novel camera from the relative encoding, renders the
    ground-truth scene there, and answers with ``oracle_predict``. Unknown
    conditioning images raise :class:`PriorUnavailableError`.
    """

    def __init__(
        self,
        gt_scene: GaussianScene,
        cond_images: list[np.ndarray],
        cond_cameras: list[Camera],
        sched: NoiseSchedule,
    ):
        if len(cond_images) != len(cond_cameras):
            raise ValueError("conditioning images and cameras must be index-aligned")
        self._scene = gt_scene
        self._sched = sched
        self._by_key = {
            _image_key(img): cam for img, cam in zip(cond_images, cond_cameras)
        }
        self._render_memo: dict[bytes, np.ndarray] = {}

    @property
    def identity(self) -> str:
        return "oracle"

    def predict(self, query: PriorQuery) -> PriorResponse:
        from . import rasterizer

        cam = self._by_key.get(_image_key(query.cond_image))
        if cam is None:
            raise PriorUnavailableError("oracle prior does not recognize the conditioning image")
        rel: SE3Pose = query.rel_cam.relative_transform()
        novel_pose = rel.compose(cam.pose)
        fx_ratio, fy_ratio = query.rel_cam.focal_ratios()
        h, w = query.z_t.shape[:2]
        intr = Intrinsics(
            fx=cam.intrinsics.fx * fx_ratio,
            fy=cam.intrinsics.fy * fy_ratio,
            cx=cam.intrinsics.cx * (w / cam.intrinsics.width),
            cy=cam.intrinsics.cy * (h / cam.intrinsics.height),
            width=w, height=h,
        )
        # queries for the same sampled view differ only in conditioning;
        # memoize the ground-truth render on the derived camera
        key = np.round(novel_pose.matrix(), 12).tobytes() + np.float64(
            [intr.fx, intr.fy, intr.cx, intr.cy, w, h]
        ).tobytes()
        gt = self._render_memo.get(key)
        if gt is None:
            if len(self._render_memo) > 256:
                self._render_memo.clear()
            gt = rasterizer.render(self._scene, Camera(novel_pose, intr)).rgb
            self._render_memo[key] = gt
        return oracle_predict(query, gt, self._sched)


def _encode_f32(arr: np.ndarray) -> str:
    clamped = np.clip(np.asarray(arr, dtype=np.float64), -WIRE_CLAMP, WIRE_CLAMP)
    return base64.b64encode(clamped.astype("<f4").tobytes()).decode()


def _decode_f32(data: str, shape: tuple) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(data), dtype="<f4")
    if raw.size != int(np.prod(shape)):
        raise PriorUnavailableError(f"wire payload has {raw.size} floats, expected shape {shape}")
    return raw.astype(np.float64).reshape(shape)


class RemotePriorBackend(PriorBackend):
    """HTTP client for the noise-prediction wire protocol.

    Requests serialize images as base64 little-endian float32 with values
    clamped to [-10, 10]; at most ``max_in_flight`` requests run concurrently.
    Remote models may be stochastic, which is reflected in ``deterministic``.
    """

    def __init__(self, url: str, timeout: float = 30.0, max_in_flight: int = 4):
        self._url = url.rstrip("/")
        self._timeout = timeout
        self.max_in_flight = max_in_flight
        self._gate = threading.Semaphore(max_in_flight)

    @property
    def identity(self) -> str:
        return f"remote:{self._url}"

    @property
    def deterministic(self) -> bool:
        return False

    def health(self) -> dict:
        import requests

        try:
            resp = requests.get(f"{self._url}/v1/health", timeout=self._timeout)
            resp.raise_for_status()
            return resp.json()
        except Exception as exc:  # noqa: BLE001 - map everything to the contract error
            raise PriorUnavailableError(f"prior health check failed: {exc}") from exc

    def predict(self, query: PriorQuery) -> PriorResponse:
        import requests

        h, w = query.z_t.shape[:2]
        body = {
            "z_t": _encode_f32(query.z_t),
            "h": h,
            "w": w,
            "t": int(query.t),
            "cond_image": _encode_f32(query.cond_image),
            "rel_cam": [float(x) for x in query.rel_cam.vec],
        }
        with self._gate:
            try:
                resp = requests.post(
                    f"{self._url}/v1/predict_noise", json=body, timeout=self._timeout
                )
                resp.raise_for_status()
                payload = resp.json()
            except Exception as exc:  # noqa: BLE001
                raise PriorUnavailableError(f"remote prior failed: {exc}") from exc
        if "eps" not in payload:
            raise PriorUnavailableError("remote prior response missing 'eps'")
        return PriorResponse(_decode_f32(payload["eps"], (h, w, 3)))


def multiview_sds_gradient(
    rendered: np.ndarray,
    novel_cam: Camera,
    input_images: list[np.ndarray],
    input_cams: list[Camera],
    prior: PriorBackend,
    sched: NoiseSchedule,
    t: int,
    eps: np.ndarray,
    lambda_sds: float = 1.0,
) -> np.ndarray:
    """Pixel-space distillation gradient for a rendered novel view.

    Noises the rendering once, queries the prior once per input view with the
    matching view-change encoding, and averages the predictions unweighted;
    the result is lambda_sds * w(t) * (mean prediction - injected noise),
    ready to be chained through ``render_with_gradients``.
    """
    if len(input_images) == 0:
        raise ValueError("need at least one input view")
    if len(input_images) != len(input_cams):
        raise ValueError("input images and cameras must be index-aligned")
    rendered = np.asarray(rendered, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != rendered.shape:
        raise ValueError("eps must match the rendering shape")
    z_t = add_noise(rendered, t, eps, sched)
    acc = np.zeros_like(rendered)
    for img, cam in zip(input_images, input_cams):
        rel = encode_relative_camera(cam, novel_cam)
        resp = prior.predict(PriorQuery(z_t=z_t, t=t, cond_image=img, rel_cam=rel))
        if resp.eps_hat.shape != rendered.shape:
            raise PriorUnavailableError(
                f"prior returned shape {resp.eps_hat.shape}, expected {rendered.shape}"
            )
        acc += resp.eps_hat
    eps_bar = acc / len(input_images)
    return lambda_sds * sched.sds_weight(t) * (eps_bar - eps)
