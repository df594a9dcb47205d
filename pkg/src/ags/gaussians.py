"""3D Gaussian scene representation and its binary file format.

Scenes are stored struct-of-arrays for vectorized math; ``Gaussian3D`` is the
single-primitive view used at API boundaries. Orientation quaternions are
(w, x, y, z) and renormalized on construction; opacity is kept as a logit so
the effective value stays in (0, 1); per-axis extents are log-scales clipped
to keep exp(log_scale) within [1e-6, 1e3].
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

SCENE_MAGIC = "AGSCENE v1"
SCENE_FIELDS = [["mean", 3], ["log_scale", 3], ["orientation", 4], ["opacity_logit", 1], ["color", 3]]
PARAMS_PER_GAUSSIAN = 14

LOG_SCALE_MIN = np.log(1e-6)
LOG_SCALE_MAX = np.log(1e3)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def logit(p):
    return np.log(p) - np.log1p(-p)


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for unit quaternions (..., 4) in (w, x, y, z) order."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    r = np.empty(q.shape[:-1] + (3, 3))
    r[..., 0, 0] = 1 - 2 * (y * y + z * z)
    r[..., 0, 1] = 2 * (x * y - w * z)
    r[..., 0, 2] = 2 * (x * z + w * y)
    r[..., 1, 0] = 2 * (x * y + w * z)
    r[..., 1, 1] = 1 - 2 * (x * x + z * z)
    r[..., 1, 2] = 2 * (y * z - w * x)
    r[..., 2, 0] = 2 * (x * z - w * y)
    r[..., 2, 1] = 2 * (y * z + w * x)
    r[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_exp_tangent(u: np.ndarray) -> np.ndarray:
    """Unit quaternion for a body-frame rotation vector (..., 3)."""
    u = np.asarray(u, dtype=np.float64)
    theta = np.linalg.norm(u, axis=-1, keepdims=True)
    half = 0.5 * theta
    small = theta < 1e-12
    sinc = np.where(small, 0.5, np.sin(half) / np.where(small, 1.0, theta))
    return np.concatenate([np.cos(half), sinc * u], axis=-1)


@dataclass(frozen=True)
class Gaussian3D:
    """One anisotropic Gaussian primitive with view-independent color."""

    mean: np.ndarray
    log_scale: np.ndarray
    orientation: np.ndarray  # unit quaternion (w, x, y, z)
    opacity_logit: float
    color: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64).reshape(3))
        ls = np.clip(np.asarray(self.log_scale, dtype=np.float64).reshape(3), LOG_SCALE_MIN, LOG_SCALE_MAX)
        object.__setattr__(self, "log_scale", ls)
        q = quat_normalize(np.asarray(self.orientation, dtype=np.float64).reshape(4))
        object.__setattr__(self, "orientation", q)
        object.__setattr__(self, "color", np.clip(np.asarray(self.color, dtype=np.float64).reshape(3), 0.0, 1.0))

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def covariance(self) -> np.ndarray:
        """World-frame 3x3 covariance R S S^T R^T."""
        r = quat_to_rot(self.orientation)
        m = r * self.scale[None, :]
        return m @ m.T


@dataclass
class GaussianScene:
    """An ordered collection of Gaussians plus a constant background color.

    Arrays are index-aligned: means (N,3), log_scales (N,3), orientations
    (N,4), opacity_logits (N,), colors (N,3). The list may be empty.
    """

    means: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    log_scales: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    orientations: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    opacity_logits: np.ndarray = field(default_factory=lambda: np.zeros(0))
    colors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    background: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        self.means = np.ascontiguousarray(self.means, dtype=np.float64).reshape(-1, 3)
        n = self.means.shape[0]
        self.log_scales = np.clip(
            np.ascontiguousarray(self.log_scales, dtype=np.float64).reshape(n, 3),
            LOG_SCALE_MIN, LOG_SCALE_MAX,
        )
        self.orientations = quat_normalize(
            np.ascontiguousarray(self.orientations, dtype=np.float64).reshape(n, 4)
        )
        self.opacity_logits = np.ascontiguousarray(self.opacity_logits, dtype=np.float64).reshape(n)
        self.colors = np.clip(
            np.ascontiguousarray(self.colors, dtype=np.float64).reshape(n, 3), 0.0, 1.0
        )
        self.background = np.clip(np.asarray(self.background, dtype=np.float64).reshape(3), 0.0, 1.0)

    def __len__(self) -> int:
        return self.means.shape[0]

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    def gaussian(self, i: int) -> Gaussian3D:
        return Gaussian3D(
            self.means[i], self.log_scales[i], self.orientations[i],
            float(self.opacity_logits[i]), self.colors[i],
        )

    @staticmethod
    def from_gaussians(gaussians: list[Gaussian3D], background=(1.0, 1.0, 1.0)) -> "GaussianScene":
        if not gaussians:
            return GaussianScene(background=np.asarray(background, dtype=np.float64))
        return GaussianScene(
            means=np.stack([g.mean for g in gaussians]),
            log_scales=np.stack([g.log_scale for g in gaussians]),
            orientations=np.stack([g.orientation for g in gaussians]),
            opacity_logits=np.array([g.opacity_logit for g in gaussians]),
            colors=np.stack([g.color for g in gaussians]),
            background=np.asarray(background, dtype=np.float64),
        )

    def copy(self) -> "GaussianScene":
        return GaussianScene(
            self.means.copy(), self.log_scales.copy(), self.orientations.copy(),
            self.opacity_logits.copy(), self.colors.copy(), self.background.copy(),
        )

    def translated(self, delta: np.ndarray) -> "GaussianScene":
        out = self.copy()
        out.means = out.means + np.asarray(delta, dtype=np.float64).reshape(1, 3)
        return out

    def world_covariances(self) -> np.ndarray:
        """(N, 3, 3) world-frame covariances."""
        r = quat_to_rot(self.orientations)
        m = r * self.scales[:, None, :]
        return m @ np.swapaxes(m, 1, 2)

    def pack(self) -> np.ndarray:
        """(N, 14) parameter matrix in the on-disk field order."""
        return np.concatenate(
            [
                self.means,
                self.log_scales,
                self.orientations,
                self.opacity_logits[:, None],
                self.colors,
            ],
            axis=1,
        )

    @staticmethod
    def unpack(params: np.ndarray, background) -> "GaussianScene":
        params = np.asarray(params, dtype=np.float64).reshape(-1, PARAMS_PER_GAUSSIAN)
        return GaussianScene(
            means=params[:, 0:3],
            log_scales=params[:, 3:6],
            orientations=params[:, 6:10],
            opacity_logits=params[:, 10],
            colors=params[:, 11:14],
            background=background,
        )


def save_scene(path: str, scene: GaussianScene) -> None:
    """Write the binary scene format: magic line, JSON header, float32 payload."""
    header = {
        "count": len(scene),
        "background": [float(x) for x in scene.background],
        "fields": SCENE_FIELDS,
    }
    payload = scene.pack().astype("<f4").tobytes()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(SCENE_MAGIC.encode() + b"\n")
        f.write(json.dumps(header).encode() + b"\n")
        f.write(payload)
    os.replace(tmp, path)


def load_scene(path: str) -> GaussianScene:
    with open(path, "rb") as f:
        magic = f.readline().decode().rstrip("\n")
        if magic != SCENE_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {SCENE_MAGIC!r}")
        header = json.loads(f.readline().decode())
        if header.get("fields") != SCENE_FIELDS:
            raise ValueError(f"{path}: unsupported field layout {header.get('fields')}")
        count = int(header["count"])
        raw = np.frombuffer(f.read(count * PARAMS_PER_GAUSSIAN * 4), dtype="<f4")
    if raw.size != count * PARAMS_PER_GAUSSIAN:
        raise ValueError(f"{path}: truncated payload")
    return GaussianScene.unpack(
        raw.astype(np.float64).reshape(count, PARAMS_PER_GAUSSIAN), header["background"]
    )
