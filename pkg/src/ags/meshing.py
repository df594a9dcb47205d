"""Isosurface extraction from a Gaussian scene's density field.

The density at a point is the opacity-weighted sum of un-normalized Gaussian
kernels, D(x) = sum_i opacity_i * exp(-0.5 (x-mu_i)^T Sigma_i^inv (x-mu_i)),
evaluated on a cubic grid that bounds all means padded by three times the
largest per-axis extent. Marching cubes itself comes from scikit-image.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from skimage import measure

from .gaussians import GaussianScene

DEFAULT_ISO_LEVEL = 0.2
_EXPONENT_CUTOFF = 30.0  # contributions below opacity * exp(-30) are skipped


@dataclass
class TriangleMesh:
    """Indexed triangle soup."""

    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    triangles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("triangle indices out of range")

    def __len__(self) -> int:
        return len(self.triangles)

    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def triangle_areas(self) -> np.ndarray:
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def translated(self, delta) -> "TriangleMesh":
        return TriangleMesh(self.vertices + np.asarray(delta).reshape(1, 3), self.triangles.copy())


def density_field(scene: GaussianScene, points: np.ndarray) -> np.ndarray:
    """Evaluate the scene density at arbitrary points (..., 3)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    out = np.zeros(pts.shape[0])
    if len(scene) == 0:
        return out.reshape(np.asarray(points).shape[:-1])
    inv_cov = np.linalg.inv(scene.world_covariances())
    opac = scene.opacities
    for i in range(len(scene)):
        d = pts - scene.means[i]
        expo = 0.5 * np.einsum("nj,jk,nk->n", d, inv_cov[i], d)
        mask = expo < _EXPONENT_CUTOFF
        out[mask] += opac[i] * np.exp(-expo[mask])
    return out.reshape(np.asarray(points).shape[:-1])


def _density_grid(scene: GaussianScene, resolution: int):
    """Sample the density on a cube around the scene; returns (grid, origin, spacing)."""
    max_scale = float(scene.scales.max())
    pad = 3.0 * max_scale
    lo = scene.means.min(axis=0) - pad
    hi = scene.means.max(axis=0) + pad
    center = 0.5 * (lo + hi)
    side = float((hi - lo).max())
    side = max(side, 1e-6)
    origin = center - 0.5 * side
    spacing = side / (resolution - 1)

    axes = [origin[d] + spacing * np.arange(resolution) for d in range(3)]
    grid = np.zeros((resolution, resolution, resolution))
    inv_cov = np.linalg.inv(scene.world_covariances())
    opac = scene.opacities
    # Evaluate each Gaussian only inside its own support box.
    for i in range(len(scene)):
        lam_max = float(np.linalg.eigvalsh(scene.gaussian(i).covariance()).max())
        r_cut = np.sqrt(2.0 * _EXPONENT_CUTOFF * lam_max)
        sl = []
        for d in range(3):
            a0 = int(np.clip(np.floor((scene.means[i, d] - r_cut - origin[d]) / spacing), 0, resolution - 1))
            a1 = int(np.clip(np.ceil((scene.means[i, d] + r_cut - origin[d]) / spacing), 0, resolution - 1))
            sl.append((a0, a1 + 1))
        xs = axes[0][sl[0][0]:sl[0][1]] - scene.means[i, 0]
        ys = axes[1][sl[1][0]:sl[1][1]] - scene.means[i, 1]
        zs = axes[2][sl[2][0]:sl[2][1]] - scene.means[i, 2]
        if not (xs.size and ys.size and zs.size):
            continue
        q = inv_cov[i]
        expo = 0.5 * (
            q[0, 0] * xs[:, None, None] ** 2
            + q[1, 1] * ys[None, :, None] ** 2
            + q[2, 2] * zs[None, None, :] ** 2
            + 2.0 * q[0, 1] * xs[:, None, None] * ys[None, :, None]
            + 2.0 * q[0, 2] * xs[:, None, None] * zs[None, None, :]
            + 2.0 * q[1, 2] * ys[None, :, None] * zs[None, None, :]
        )
        grid[sl[0][0]:sl[0][1], sl[1][0]:sl[1][1], sl[2][0]:sl[2][1]] += opac[i] * np.exp(
            -np.minimum(expo, 700.0)
        )
    return grid, origin, spacing


def extract_mesh(
    scene: GaussianScene, grid_resolution: int = 96, iso_level: float = DEFAULT_ISO_LEVEL
) -> TriangleMesh:
    """Marching-cubes surface of the scene density at ``iso_level``.

    An empty scene, or a field that never crosses the iso level, yields an
    empty mesh. Degenerate (near zero-area) triangles are dropped.
    """
    if grid_resolution < 8:
        raise ValueError("grid_resolution must be at least 8")
    if len(scene) == 0:
        return TriangleMesh()
    grid, origin, spacing = _density_grid(scene, grid_resolution)
    if grid.max() <= iso_level or grid.min() >= iso_level:
        return TriangleMesh()
    verts, faces, _, _ = measure.marching_cubes(grid, level=iso_level, spacing=(spacing,) * 3)
    verts = verts + origin[None, :]
    mesh = TriangleMesh(verts, faces.astype(np.int64))
    areas = mesh.triangle_areas()
    keep = areas > 1e-12
    if not np.all(keep):
        mesh = TriangleMesh(mesh.vertices, mesh.triangles[keep])
    return mesh


def save_mesh_obj(path: str, mesh: TriangleMesh) -> None:
    """Write a minimal Wavefront OBJ (1-based indices)."""
    import os

    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
    os.replace(tmp, path)


def load_mesh_obj(path: str) -> TriangleMesh:
    verts, faces = [], []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    if not verts:
        warnings.warn(f"{path}: no vertices found")
        return TriangleMesh()
    return TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64))
