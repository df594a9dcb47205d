"""Evaluation metrics: pose accuracy, image quality, and surface F1.

The perceptual proxy is a deterministic, non-neural stand-in for learned
perceptual distances: a multi-scale mix of MSE and gradient-magnitude
difference. Its values are NOT numerically comparable to LPIPS; thresholds
quoted in LPIPS units elsewhere are exposed as configuration in proxy units.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cameras import Camera, geodesic_angle, umeyama_align
from .meshing import TriangleMesh

PSNR_CAP_DB = 99.0
DEFAULT_ROT_THRESHOLDS_DEG = (5.0, 15.0)
DEFAULT_CC_THRESHOLD = 0.1
DEFAULT_F1_THRESHOLD = 0.01


@dataclass
class MetricsSummary:
    """Bundle of evaluation numbers serialized by the CLI."""

    rot_acc: dict[float, float] = field(default_factory=dict)
    cc_acc: float | None = None
    psnr: float | None = None
    proxy: float | None = None
    f1: dict[float, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": "agsmetrics/1",
            "rot_acc": {f"{k:g}": v for k, v in self.rot_acc.items()},
            "cc_acc": self.cc_acc,
            "psnr": self.psnr,
            "proxy": self.proxy,
            "f1": {f"{k:g}": v for k, v in self.f1.items()},
        }


def pairwise_rotation_errors(pred: list[Camera], gt: list[Camera]) -> np.ndarray:
    """Geodesic errors (radians) between predicted and true relative rotations."""
    if len(pred) != len(gt):
        raise ValueError("camera lists must have equal length")
    n = len(pred)
    errs = []
    for i in range(n):
        for j in range(i + 1, n):
            rel_pred = pred[i].pose.rotation.m @ pred[j].pose.rotation.m.T
            rel_gt = gt[i].pose.rotation.m @ gt[j].pose.rotation.m.T
            errs.append(geodesic_angle(rel_pred, rel_gt))
    return np.array(errs)


def rotation_accuracy(pred: list[Camera], gt: list[Camera], tau_deg: float) -> float:
    """Fraction of unordered camera pairs whose relative rotation error < tau."""
    if len(pred) < 2:
        raise ValueError("need at least two cameras")
    errs = pairwise_rotation_errors(pred, gt)
    return float(np.mean(errs < math.radians(tau_deg)))


def mean_rotation_error_deg(pred: list[Camera], gt: list[Camera]) -> float:
    return float(np.degrees(pairwise_rotation_errors(pred, gt).mean()))


def camera_center_accuracy(
    pred: list[Camera], gt: list[Camera], tau: float = DEFAULT_CC_THRESHOLD
) -> float:
    """Fraction of centers within ``tau`` of the scene scale after alignment.

    Predictions are mapped onto ground truth with the optimal similarity, so
    the metric is invariant to any global similarity of the predictions.
    Scene scale is the maximum pairwise ground-truth center distance.
    """
    if len(pred) != len(gt) or len(pred) < 3:
        raise ValueError("need at least three index-aligned cameras")
    pc = np.stack([c.center() for c in pred])
    gc = np.stack([c.center() for c in gt])
    sim = umeyama_align(pc, gc)
    aligned = sim.apply(pc)
    scale = max(
        float(np.linalg.norm(gc[i] - gc[j]))
        for i in range(len(gt))
        for j in range(i + 1, len(gt))
    )
    if scale <= 0:
        raise ValueError("ground-truth centers are coincident")
    return float(np.mean(np.linalg.norm(aligned - gc, axis=1) < tau * scale))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1], capped at 99."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def _grad_magnitude(img: np.ndarray) -> np.ndarray:
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1, :] = img[1:] - img[:-1]
    return np.sqrt(gx * gx + gy * gy)


def _box_downsample(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    h2, w2 = h - h % 2, w - w % 2
    img = img[:h2, :w2]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def perceptual_proxy(a: np.ndarray, b: np.ndarray) -> float:
    """Deterministic perceptual distance over three dyadic scales.

    At each scale (full, half, quarter; 2x2 box downsampling) the score is
    0.5 * MSE + 0.5 * mean |grad_mag(a) - grad_mag(b)| with a 2-tap forward
    difference gradient; the three scores are averaged. Symmetric and zero
    only for identical images.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    total = 0.0
    for _ in range(3):
        mse = float(np.mean((a - b) ** 2))
        gdiff = float(np.mean(np.abs(_grad_magnitude(a) - _grad_magnitude(b))))
        total += 0.5 * mse + 0.5 * gdiff
        a = _box_downsample(a)
        b = _box_downsample(b)
    return total / 3.0


# ---------------------------------------------------------------------------
# Mesh F1
# ---------------------------------------------------------------------------


def sample_mesh_surface(mesh: TriangleMesh, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Area-weighted uniform samples on the mesh surface."""
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has no area to sample")
    counts = rng.multinomial(n_samples, areas / total)
    tri_idx = np.repeat(np.arange(len(mesh)), counts)
    a = mesh.vertices[mesh.triangles[tri_idx, 0]]
    b = mesh.vertices[mesh.triangles[tri_idx, 1]]
    c = mesh.vertices[mesh.triangles[tri_idx, 2]]
    r1 = np.sqrt(rng.random(len(tri_idx)))[:, None]
    r2 = rng.random(len(tri_idx))[:, None]
    return (1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c


def point_triangle_distances(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Exact distances from points to triangles, one pair per row."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    closest = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    m = (d1 <= 0) & (d2 <= 0)
    closest[m] = a[m]
    done |= m

    m = ~done & (d3 >= 0) & (d4 <= d3)
    closest[m] = b[m]
    done |= m

    vc = d1 * d4 - d3 * d2
    m = ~done & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
    closest[m] = a[m] + v[m, None] * ab[m]
    done |= m

    m = ~done & (d6 >= 0) & (d5 <= d6)
    closest[m] = c[m]
    done |= m

    vb = d5 * d2 - d1 * d6
    m = ~done & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
    closest[m] = a[m] + w[m, None] * ac[m]
    done |= m

    va = d3 * d6 - d5 * d4
    m = ~done & (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    denom_bc = (d4 - d3) + (d5 - d6)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(denom_bc != 0, (d4 - d3) / denom_bc, 0.0)
    closest[m] = b[m] + w[m, None] * (c[m] - b[m])
    done |= m

    m = ~done
    denom = va + vb + vc
    with np.errstate(invalid="ignore", divide="ignore"):
        inv = np.where(denom != 0, 1.0 / denom, 0.0)
    v = vb * inv
    w = vc * inv
    closest[m] = a[m] + v[m, None] * ab[m] + w[m, None] * ac[m]
    return np.linalg.norm(p - closest, axis=1)


class _TriangleGrid:
    """Uniform hash grid over triangles for within-tau surface queries."""

    def __init__(self, mesh: TriangleMesh, cell: float):
        self.mesh = mesh
        self.cell = cell
        self.cells: dict[tuple, list[int]] = {}
        verts = mesh.vertices
        tris = mesh.triangles
        for i in range(len(mesh)):
            pts = verts[tris[i]]
            lo = np.floor(pts.min(axis=0) / cell).astype(np.int64)
            hi = np.floor(pts.max(axis=0) / cell).astype(np.int64)
            for ix in range(lo[0], hi[0] + 1):
                for iy in range(lo[1], hi[1] + 1):
                    for iz in range(lo[2], hi[2] + 1):
                        self.cells.setdefault((ix, iy, iz), []).append(i)

    def fraction_within(self, points: np.ndarray, tau: float) -> float:
        verts = self.mesh.vertices
        tris = self.mesh.triangles
        keys = np.floor(points / self.cell).astype(np.int64)
        within = np.zeros(len(points), dtype=bool)
        order = np.lexsort(keys.T)
        sorted_keys = keys[order]
        boundaries = np.nonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1))[0] + 1
        groups = np.split(order, boundaries)
        for grp in groups:
            key = keys[grp[0]]
            cand: list[int] = []
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for dz in (-1, 0, 1):
                        cand.extend(self.cells.get((key[0] + dx, key[1] + dy, key[2] + dz), ()))
            if not cand:
                continue
            cand = np.unique(np.array(cand, dtype=np.int64))
            pts = points[grp]
            hit = np.zeros(len(grp), dtype=bool)
            for start in range(0, len(cand), 512):
                chunk = cand[start:start + 512]
                pp = np.repeat(pts, len(chunk), axis=0)
                aa = np.tile(verts[tris[chunk, 0]], (len(grp), 1))
                bb = np.tile(verts[tris[chunk, 1]], (len(grp), 1))
                cc = np.tile(verts[tris[chunk, 2]], (len(grp), 1))
                d = point_triangle_distances(pp, aa, bb, cc).reshape(len(grp), len(chunk))
                hit |= (d <= tau).any(axis=1)
                if hit.all():
                    break
            within[grp] = hit
        return float(within.mean())


def mesh_f1(
    pred: TriangleMesh,
    gt: TriangleMesh,
    tau: float = DEFAULT_F1_THRESHOLD,
    n_samples: int = 100_000,
    seed: int = 0,
) -> float:
    """Surface F1 at distance threshold ``tau``.

    Precision is the fraction of predicted-surface samples within ``tau`` of
    the ground-truth surface (exact point-to-triangle distances accelerated
    by a uniform spatial grid); recall is symmetric; F1 is their harmonic
    mean. An empty mesh scores 0 with a warning.
    """
    if pred.is_empty() or gt.is_empty():
        warnings.warn("mesh_f1: empty mesh, scoring 0")
        return 0.0
    rng = np.random.default_rng(seed)
    pred_pts = sample_mesh_surface(pred, n_samples, rng)
    gt_pts = sample_mesh_surface(gt, n_samples, rng)
    precision = _TriangleGrid(gt, tau).fraction_within(pred_pts, tau)
    recall = _TriangleGrid(pred, tau).fraction_within(gt_pts, tau)
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)
