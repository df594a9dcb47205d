"""Dev scratch: finite-difference validation of the rasterizer backward pass."""
import time

import numpy as np

from ags.cameras import Camera, Intrinsics, SE3Pose, Twist, apply_twist, look_at_pose
from ags.gaussians import GaussianScene, quat_exp_tangent, quat_multiply
from ags.rasterizer import render, render_with_gradients


def random_scene(rng, n, background=(1.0, 1.0, 1.0)):
    return GaussianScene(
        means=rng.uniform(-0.5, 0.5, (n, 3)),
        log_scales=rng.uniform(np.log(0.04), np.log(0.15), (n, 3)),
        orientations=rng.normal(size=(n, 4)),
        opacity_logits=rng.uniform(-1.0, 2.0, n),
        colors=rng.uniform(0.05, 0.95, (n, 3)),
        background=background,
    )


def loss(scene, cam, grad_image):
    return float((render(scene, cam).rgb * grad_image).sum())


def check(seed=0, n=10, res=32, h=1e-4):
    rng = np.random.default_rng(seed)
    scene = random_scene(rng, n)
    intr = Intrinsics.from_fov(res, res, 50.0)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    cam = Camera(look_at_pose(2.5 * direction, np.zeros(3)), intr)
    grad_image = rng.normal(size=(res, res, 3))

    g = render_with_gradients(scene, cam, grad_image)
    worst = {}

    def fd_vs(name, analytic, plus, minus):
        num = (plus - minus) / (2 * h)
        denom = max(abs(num), abs(analytic), 1e-3)
        rel = abs(num - analytic) / denom
        err_abs = abs(num - analytic)
        key = worst.get(name, (0, 0))
        if rel > key[0]:
            worst[name] = (rel, err_abs)
        ok = rel < 1e-3 or err_abs < 1e-6
        if not ok:
            print(f"  FAIL {name}: analytic={analytic:.8e} fd={num:.8e} rel={rel:.2e}")
        return ok

    all_ok = True
    for i in range(n):
        for d in range(3):
            s2 = scene.copy(); s2.means[i, d] += h
            s3 = scene.copy(); s3.means[i, d] -= h
            all_ok &= fd_vs("mean", g.d_means[i, d], loss(s2, cam, grad_image), loss(s3, cam, grad_image))
        for d in range(3):
            s2 = scene.copy(); s2.log_scales[i, d] += h
            s3 = scene.copy(); s3.log_scales[i, d] -= h
            all_ok &= fd_vs("log_scale", g.d_log_scales[i, d], loss(s2, cam, grad_image), loss(s3, cam, grad_image))
        for d in range(3):
            u = np.zeros(3); u[d] = h
            s2 = scene.copy(); s2.orientations[i] = quat_multiply(scene.orientations[i], quat_exp_tangent(u))
            s3 = scene.copy(); s3.orientations[i] = quat_multiply(scene.orientations[i], quat_exp_tangent(-u))
            all_ok &= fd_vs("orient", g.d_orientations[i, d], loss(s2, cam, grad_image), loss(s3, cam, grad_image))
        s2 = scene.copy(); s2.opacity_logits[i] += h
        s3 = scene.copy(); s3.opacity_logits[i] -= h
        all_ok &= fd_vs("opacity", g.d_opacity_logits[i], loss(s2, cam, grad_image), loss(s3, cam, grad_image))
        for d in range(3):
            s2 = scene.copy(); s2.colors[i, d] += h
            s3 = scene.copy(); s3.colors[i, d] -= h
            all_ok &= fd_vs("color", g.d_colors[i, d], loss(s2, cam, grad_image), loss(s3, cam, grad_image))
    xi6 = np.zeros(6)
    for d in range(6):
        xi = np.zeros(6); xi[d] = h
        cp = Camera(apply_twist(cam.pose, Twist(xi[:3], xi[3:])), intr)
        cm = Camera(apply_twist(cam.pose, Twist(-xi[:3], -xi[3:])), intr)
        analytic = g.d_pose.as_vector()[d]
        all_ok &= fd_vs("pose", analytic, loss(scene, cp, grad_image), loss(scene, cm, grad_image))
    return all_ok, worst


if __name__ == "__main__":
    t0 = time.time()
    ok_all = True
    agg = {}
    for seed in range(5):
        ok, worst = check(seed)
        ok_all &= ok
        for k, v in worst.items():
            if v[0] > agg.get(k, (0, 0))[0]:
                agg[k] = v
        print(f"seed {seed}: {'OK' if ok else 'FAIL'}")
    for k, (rel, ab) in sorted(agg.items()):
        print(f"  worst {k}: rel={rel:.3e} abs={ab:.3e}")
    print(f"{'ALL OK' if ok_all else 'FAILURES'} in {time.time()-t0:.1f}s")
