"""Rigid-body and pinhole camera math.

Conventions used throughout the package:

* World-to-camera poses, right-handed frames, camera looks down +z in its
  own frame (x right, y down in the image).
* Pixel centers sit at integer coordinates; pixel (row, col) has center
  (x=col, y=row), so the image spans [-0.5, W-0.5] x [-0.5, H-0.5].
* Pose updates are left-multiplicative twists: ``new = exp(twist) @ old``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

_EPS_ORTHO = 1e-9
_EPS_SMALL_ANGLE = 1e-8


class DegenerateConfigurationError(ValueError):
    """Raised when a point configuration is too degenerate to align."""


def skew(w: np.ndarray) -> np.ndarray:
    """Cross-product matrix of a 3-vector."""
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


@dataclass(frozen=True)
class Rotation:
    """A proper rotation, stored as an orthonormal 3x3 matrix with det +1."""

    m: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(np.asarray(self.m, dtype=np.float64))
        if m.shape != (3, 3):
            raise ValueError(f"rotation matrix must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("rotation matrix has non-finite entries")
        if np.abs(m.T @ m - np.eye(3)).max() > 1e-7:
            raise ValueError("matrix is not orthonormal")
        if abs(np.linalg.det(m) - 1.0) > 1e-7:
            raise ValueError("matrix is not a proper rotation (det != +1)")
        object.__setattr__(self, "m", m)

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(np.eye(3))

    @staticmethod
    def from_axis_angle(axis: np.ndarray, angle: float) -> "Rotation":
        axis = np.asarray(axis, dtype=np.float64)
        n = np.linalg.norm(axis)
        if n == 0.0:
            raise ValueError("zero axis")
        return Rotation(so3_exp(axis / n * angle))

    @staticmethod
    def from_matrix(m: np.ndarray, orthonormalize: bool = False) -> "Rotation":
        """Build a Rotation, optionally projecting onto SO(3) first."""
        if orthonormalize:
            m = project_to_so3(np.asarray(m, dtype=np.float64))
        return Rotation(m)

    def inverse(self) -> "Rotation":
        return Rotation(self.m.T.copy())

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return Rotation(self.m @ other.m)

    def angle_to(self, other: "Rotation") -> float:
        """Geodesic angle (radians) between two rotations."""
        return geodesic_angle(self.m, other.m)


def geodesic_angle(ra: np.ndarray, rb: np.ndarray) -> float:
    """Angle of the relative rotation between two rotation matrices.

    The arccos argument is clamped so numerically-identical inputs do not
    produce NaN.
    """
    cos = (np.trace(ra @ rb.T) - 1.0) * 0.5
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def project_to_so3(m: np.ndarray) -> np.ndarray:
    """Nearest (Frobenius) proper rotation to an arbitrary 3x3 matrix."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rodrigues formula; series expansion near zero."""
    omega = np.asarray(omega, dtype=np.float64)
    theta = np.linalg.norm(omega)
    k = skew(omega)
    if theta < _EPS_SMALL_ANGLE:
        return np.eye(3) + k + 0.5 * (k @ k)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def so3_log(r: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation with angle < pi."""
    cos = np.clip((np.trace(r) - 1.0) * 0.5, -1.0, 1.0)
    theta = math.acos(cos)
    vee = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if theta < _EPS_SMALL_ANGLE:
        return vee * (1.0 + theta * theta / 6.0)
    return vee * (theta / math.sin(theta))


def _left_jacobian(omega: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(omega)
    k = skew(omega)
    if theta < _EPS_SMALL_ANGLE:
        return np.eye(3) + 0.5 * k + (k @ k) / 6.0
    a = (1.0 - math.cos(theta)) / (theta * theta)
    b = (theta - math.sin(theta)) / (theta ** 3)
    return np.eye(3) + a * k + b * (k @ k)


def _left_jacobian_inv(omega: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(omega)
    k = skew(omega)
    if theta < _EPS_SMALL_ANGLE:
        return np.eye(3) - 0.5 * k + (k @ k) / 12.0
    half = 0.5 * theta
    cot = 1.0 / math.tan(half)
    coeff = (1.0 - half * cot) / (theta * theta)
    return np.eye(3) - 0.5 * k + coeff * (k @ k)


@dataclass(frozen=True)
class Twist:
    """Tangent-space pose increment: axis-angle ``omega`` and translation ``v``."""

    omega: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=np.float64).reshape(3)
        v = np.asarray(self.v, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(omega)) and np.all(np.isfinite(v))):
            raise ValueError("twist has non-finite entries")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "v", v)

    @staticmethod
    def zero() -> "Twist":
        return Twist(np.zeros(3), np.zeros(3))

    def as_vector(self) -> np.ndarray:
        """(omega, v) stacked as a 6-vector."""
        return np.concatenate([self.omega, self.v])

    @staticmethod
    def from_vector(xi: np.ndarray) -> "Twist":
        xi = np.asarray(xi, dtype=np.float64).reshape(6)
        return Twist(xi[:3], xi[3:])


@dataclass(frozen=True)
class SE3Pose:
    """World-to-camera rigid transform."""

    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation has non-finite entries")
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "SE3Pose":
        return SE3Pose(Rotation.identity(), np.zeros(3))

    @staticmethod
    def from_matrix(m: np.ndarray, orthonormalize: bool = False) -> "SE3Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected 4x4 matrix, got {m.shape}")
        return SE3Pose(Rotation.from_matrix(m[:3, :3], orthonormalize), m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.m
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "SE3Pose":
        rt = self.rotation.m.T
        return SE3Pose(Rotation(rt.copy()), -rt @ self.translation)

    def compose(self, other: "SE3Pose") -> "SE3Pose":
        """self o other: apply ``other`` first, then ``self``."""
        return SE3Pose(
            self.rotation @ other.rotation,
            self.rotation.m @ other.translation + self.translation,
        )

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map world points (..., 3) into the camera frame."""
        return points @ self.rotation.m.T + self.translation

    def camera_center(self) -> np.ndarray:
        """Camera center in world coordinates, -R^T t."""
        return -self.rotation.m.T @ self.translation


def relative_pose(src: SE3Pose, tgt: SE3Pose) -> SE3Pose:
    """Transform mapping the source camera frame into the target frame.

    ``relative_pose(src, tgt).compose(src) == tgt``. Bitwise-equal inputs
    return an exact identity.
    """
    if np.array_equal(src.rotation.m, tgt.rotation.m) and np.array_equal(
        src.translation, tgt.translation
    ):
        return SE3Pose.identity()
    return tgt.compose(src.inverse())


def se3_exp(xi: Twist) -> SE3Pose:
    """Exponential map of a twist."""
    r = so3_exp(xi.omega)
    t = _left_jacobian(xi.omega) @ xi.v
    return SE3Pose(Rotation(r), t)


def apply_twist(pose: SE3Pose, xi: Twist) -> SE3Pose:
    """Left-multiplicative pose update ``exp(xi) o pose``.

    The resulting rotation is re-orthonormalized so repeated updates cannot
    drift off SO(3).
    """
    if np.linalg.norm(xi.omega) >= math.pi:
        raise ValueError("twist rotation magnitude must be < pi")
    inc = se3_exp(xi)
    out = inc.compose(pose)
    return SE3Pose(
        Rotation(project_to_so3(out.rotation.m)),
        out.translation,
    )


def twist_log(pose: SE3Pose) -> Twist:
    """Inverse of ``apply_twist`` relative to the identity pose."""
    omega = so3_log(pose.rotation.m)
    v = _left_jacobian_inv(omega) @ pose.translation
    return Twist(omega, v)


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @staticmethod
    def from_fov(width: int, height: int, fov_x_deg: float) -> "Intrinsics":
        f = (width / 2.0) / math.tan(math.radians(fov_x_deg) / 2.0)
        return Intrinsics(
            fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
            width=width, height=height,
        )


@dataclass(frozen=True)
class Camera:
    """A posed pinhole camera."""

    pose: SE3Pose
    intrinsics: Intrinsics

    def center(self) -> np.ndarray:
        return self.pose.camera_center()


@dataclass(frozen=True)
class RelativeCameraEncoding:
    """18-vector view-change descriptor.

    Entries 0..15 hold the flattened (row-major) 4x4 relative world-to-camera
    transform from the source camera frame to the target camera frame; the
    final two entries are the log focal-length ratios, which capture apparent
    scale change from cropping.
    """

    vec: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vec, dtype=np.float64).reshape(18)
        if not np.all(np.isfinite(vec)):
            raise ValueError("encoding has non-finite entries")
        if not np.array_equal(vec[12:15], np.zeros(3)) or vec[15] != 1.0:
            raise ValueError("entries 12..15 must be the homogeneous row (0,0,0,1)")
        object.__setattr__(self, "vec", vec)

    def relative_transform(self) -> SE3Pose:
        return SE3Pose.from_matrix(self.vec[:16].reshape(4, 4), orthonormalize=True)

    def focal_ratios(self) -> tuple[float, float]:
        return float(np.exp(self.vec[16])), float(np.exp(self.vec[17]))


def encode_relative_camera(src: Camera, tgt: Camera) -> RelativeCameraEncoding:
    """Encode the pose and focal change from ``src`` to ``tgt``."""
    rel = relative_pose(src.pose, tgt.pose)
    vec = np.empty(18)
    vec[:16] = rel.matrix().reshape(-1)
    vec[16] = math.log(tgt.intrinsics.fx / src.intrinsics.fx)
    vec[17] = math.log(tgt.intrinsics.fy / src.intrinsics.fy)
    return RelativeCameraEncoding(vec)


def look_at_pose(center: np.ndarray, target: np.ndarray, up: np.ndarray | None = None) -> SE3Pose:
    """World-to-camera pose for a camera at ``center`` looking at ``target``.

    The image up direction follows world +z; when the optical axis is within
    ~1e-9 of vertical the +x axis is used instead.
    """
    center = np.asarray(center, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - center
    n = np.linalg.norm(fwd)
    if n == 0.0:
        raise ValueError("camera center coincides with look-at target")
    z_cam = fwd / n
    if up is None:
        up = np.array([0.0, 0.0, 1.0])
    x_cam = np.cross(z_cam, up)
    nx = np.linalg.norm(x_cam)
    if nx < 1e-9:
        x_cam = np.cross(z_cam, np.array([1.0, 0.0, 0.0]))
        nx = np.linalg.norm(x_cam)
    x_cam = x_cam / nx
    y_cam = np.cross(z_cam, x_cam)
    r = np.stack([x_cam, y_cam, z_cam])
    return SE3Pose(Rotation(project_to_so3(r)), -r @ center)


def sample_sphere_poses(n: int, radius: float, look_at: np.ndarray) -> list[SE3Pose]:
    """Deterministic Fibonacci-lattice poses on a sphere, all aimed at ``look_at``.

    The first sample always sits at the +z pole (center ``look_at + (0, 0,
    radius)``), which anchors the ordering convention for discrete search.
    """
    if n < 1:
        raise ValueError("need at least one pose")
    if radius <= 0:
        raise ValueError("radius must be positive")
    look_at = np.asarray(look_at, dtype=np.float64)
    poses = []
    for k in range(n):
        z = 1.0 - 2.0 * k / n
        rho = math.sqrt(max(0.0, 1.0 - z * z))
        phi = k * GOLDEN_ANGLE
        direction = np.array([rho * math.cos(phi), rho * math.sin(phi), z])
        poses.append(look_at_pose(look_at + radius * direction, look_at))
    return poses


@dataclass(frozen=True)
class SimilarityTransform:
    """x -> scale * R x + t."""

    scale: float
    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3)
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * (points @ self.rotation.m.T) + self.translation


def umeyama_align(pred_points: np.ndarray, gt_points: np.ndarray) -> SimilarityTransform:
    """Least-squares similarity aligning predicted points onto ground truth.

    Minimizes sum ||s R p_i + t - g_i||^2 with det(R) = +1 enforced, so a
    mirrored configuration is absorbed into residual rather than a reflection.
    """
    p = np.asarray(pred_points, dtype=np.float64).reshape(-1, 3)
    g = np.asarray(gt_points, dtype=np.float64).reshape(-1, 3)
    if p.shape != g.shape or p.shape[0] < 3:
        raise ValueError("need equal-length point lists with at least 3 points")
    mu_p = p.mean(axis=0)
    mu_g = g.mean(axis=0)
    pc = p - mu_p
    gc = g - mu_g
    for name, pts in (("predicted", pc), ("ground-truth", gc)):
        sv = np.linalg.svd(pts, compute_uv=False)
        if sv[1] <= max(1e-12, 1e-9 * sv[0]):
            raise DegenerateConfigurationError(
                f"{name} points are collinear or coincident; similarity is ill-posed"
            )
    cov = gc.T @ pc / p.shape[0]
    u, d, vt = np.linalg.svd(cov)
    s_fix = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_fix[2] = -1.0
    r = u @ np.diag(s_fix) @ vt
    var_p = (pc ** 2).sum() / p.shape[0]
    scale = float((d * s_fix).sum() / var_p)
    if scale <= 0:
        raise DegenerateConfigurationError("alignment collapsed to non-positive scale")
    t = mu_g - scale * r @ mu_p
    return SimilarityTransform(scale, Rotation(project_to_so3(r)), t)


# ---------------------------------------------------------------------------
# Pose file I/O: JSON list of cameras with a row-major 4x4 and intrinsics.
# ---------------------------------------------------------------------------


def camera_to_dict(cam: Camera) -> dict:
    return {
        "world_to_camera": [float(x) for x in cam.pose.matrix().reshape(-1)],
        "fx": cam.intrinsics.fx,
        "fy": cam.intrinsics.fy,
        "cx": cam.intrinsics.cx,
        "cy": cam.intrinsics.cy,
        "width": cam.intrinsics.width,
        "height": cam.intrinsics.height,
    }


def camera_from_dict(d: dict) -> Camera:
    m = np.asarray(d["world_to_camera"], dtype=np.float64).reshape(4, 4)
    intr = Intrinsics(
        fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
        width=int(d["width"]), height=int(d["height"]),
    )
    return Camera(SE3Pose.from_matrix(m, orthonormalize=True), intr)


def save_cameras(path: str, cameras: list[Camera]) -> None:
    """Write a camera list as JSON, atomically (write-temp-then-rename)."""
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        json.dump([camera_to_dict(c) for c in cameras], f, indent=1)
    os.replace(tmp, path)


def load_cameras(path: str) -> list[Camera]:
    with open(path) as f:
        data = json.load(f)
    if not isinstance(data, list):
        raise ValueError(f"pose file {path} must hold a top-level list")
    return [camera_from_dict(d) for d in data]
