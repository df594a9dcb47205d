"""Render a synthetic Gaussian scene from a ring of viewpoints.

Builds a deterministic test object, places cameras on a Fibonacci sphere,
renders each view, and writes a contact-sheet PNG plus one scene file you can
feed to the other demos or the CLI.

Run from the repository root:

    python demos/01_render_a_scene.py
"""

import os

import numpy as np

from ags import Camera, Intrinsics, generate_scene, render, sample_sphere_poses, save_scene
from ags.images import save_image

OUT_DIR = os.path.join(os.path.dirname(__file__), "_out")
os.makedirs(OUT_DIR, exist_ok=True)

# A "cluster" scene: a handful of color-coded blobs inside the unit sphere.
scene = generate_scene(seed=7, n_gaussians=96, style="cluster")
print(f"scene with {len(scene)} gaussians, background {scene.background}")

intr = Intrinsics.from_fov(width=96, height=96, fov_x_deg=50.0)
poses = sample_sphere_poses(n=8, radius=2.5, look_at=np.zeros(3))

tiles = []
for i, pose in enumerate(poses):
    out = render(scene, Camera(pose, intr))
    tiles.append(out.rgb)
    print(f"view {i}: coverage {out.alpha.mean():.2f}, "
          f"depth range [{out.expected_depth[out.alpha > 0.5].min():.2f}, "
          f"{out.expected_depth[out.alpha > 0.5].max():.2f}]")

sheet = np.concatenate(tiles, axis=1)
save_image(os.path.join(OUT_DIR, "ring_views.png"), sheet)
save_scene(os.path.join(OUT_DIR, "demo_scene.ags"), scene)
print(f"wrote {OUT_DIR}/ring_views.png and {OUT_DIR}/demo_scene.ags")
