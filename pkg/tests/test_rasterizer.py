import numpy as np
import pytest

from ags.cameras import Camera, Intrinsics, SE3Pose, look_at_pose
from ags.gaussians import Gaussian3D, GaussianScene, logit
from ags.rasterizer import (
    project_gaussian,
    render,
    render_with_gradients,
)
from conftest import random_scene, make_camera
from oracles import brute_force_render, finite_difference_check


def centered_intrinsics(res=32):
    return Intrinsics(fx=100.0, fy=100.0, cx=(res - 1) / 2, cy=(res - 1) / 2, width=res, height=res)


class TestProjection:
    def test_optical_axis_point_hits_principal_point(self):
        intr = centered_intrinsics()
        cam = Camera(SE3Pose.identity(), intr)
        g = Gaussian3D([0, 0, 2.0], [-2.5] * 3, [1, 0, 0, 0], 0.0, [0.5] * 3)
        proj = project_gaussian(g, cam)
        assert proj is not None
        assert abs(proj.mean2d[0] - intr.cx) < 1e-12
        assert abs(proj.mean2d[1] - intr.cy) < 1e-12
        assert abs(proj.depth - 2.0) < 1e-12

    def test_near_plane_culls(self):
        cam = Camera(SE3Pose.identity(), centered_intrinsics())
        for z in (0.01, 0.0, -1.0):
            g = Gaussian3D([0, 0, z], [-3.0] * 3, [1, 0, 0, 0], 0.0, [0.5] * 3)
            assert project_gaussian(g, cam) is None

    def test_off_image_ellipse_culls(self):
        cam = Camera(SE3Pose.identity(), centered_intrinsics())
        g = Gaussian3D([100.0, 0, 2.0], [-4.0] * 3, [1, 0, 0, 0], 0.0, [0.5] * 3)
        assert project_gaussian(g, cam) is None

    def test_cov2d_matches_finite_difference_jacobian(self, rng):
        # propagate the 3D covariance through a numerically differentiated
        # pinhole projection and compare (ignoring the constant blur floor)
        from ags.rasterizer import BLUR_PX2

        cam = make_camera(resolution=64, seed=3)
        intr = cam.intrinsics
        for _ in range(10):
            g = Gaussian3D(
                rng.uniform(-0.3, 0.3, 3), rng.uniform(-3.0, -2.0, 3),
                rng.normal(size=4), 0.0, [0.5] * 3,
            )
            proj = project_gaussian(g, cam)
            assert proj is not None

            def project_point(p_world):
                pc = cam.pose.transform(p_world[None, :])[0]
                return np.array([
                    intr.fx * pc[0] / pc[2] + intr.cx,
                    intr.fy * pc[1] / pc[2] + intr.cy,
                ])

            h = 1e-5
            jac = np.zeros((2, 3))
            for d in range(3):
                dp = np.zeros(3)
                dp[d] = h
                jac[:, d] = (project_point(g.mean + dp) - project_point(g.mean - dp)) / (2 * h)
            expected = jac @ g.covariance() @ jac.T + BLUR_PX2 * np.eye(2)
            rel = np.abs(proj.cov2d - expected).max() / np.abs(expected).max()
            assert rel < 1e-3


class TestRender:
    def test_empty_scene(self):
        cam = make_camera()
        scene = GaussianScene(background=np.array([0.2, 0.4, 0.6]))
        out = render(scene, cam)
        assert np.allclose(out.rgb, [0.2, 0.4, 0.6])
        assert np.array_equal(out.alpha, np.zeros_like(out.alpha))
        assert np.array_equal(out.expected_depth, np.zeros_like(out.expected_depth))

    def test_single_opaque_gaussian_center_color(self):
        intr = centered_intrinsics(33)  # odd resolution: principal point on a pixel
        cam = Camera(SE3Pose.identity(), intr)
        color = np.array([0.8, 0.3, 0.1])
        g = Gaussian3D([0, 0, 2.0], [np.log(0.08)] * 3, [1, 0, 0, 0], logit(0.995), color)
        out = render(GaussianScene.from_gaussians([g]), cam)
        center = out.rgb[16, 16]
        assert np.abs(center - color).max() < 1e-2

    def test_matches_brute_force_oracle(self, rng):
        for seed in range(3):
            local = np.random.default_rng(seed)
            scene = random_scene(local, 20)
            cam = make_camera(resolution=32, seed=seed)
            fast = render(scene, cam).rgb
            reference = brute_force_render(scene, cam)
            assert np.abs(fast - reference).max() < 1e-6

    def test_two_overlapping_gaussians_oracle(self):
        intr = centered_intrinsics()
        cam = Camera(SE3Pose.identity(), intr)
        gs = [
            Gaussian3D([0.02, 0, 1.8], [np.log(0.06)] * 3, [1, 0, 0, 0], 1.5, [0.9, 0.1, 0.1]),
            Gaussian3D([-0.02, 0, 2.2], [np.log(0.08)] * 3, [1, 0, 0, 0], 1.0, [0.1, 0.9, 0.1]),
        ]
        scene = GaussianScene.from_gaussians(gs)
        assert np.abs(render(scene, cam).rgb - brute_force_render(scene, cam)).max() < 1e-6

    def test_deterministic(self, rng):
        scene = random_scene(rng, 30)
        cam = make_camera(seed=5)
        a = render(scene, cam)
        b = render(scene, cam)
        assert np.array_equal(a.rgb, b.rgb)
        assert np.array_equal(a.alpha, b.alpha)
        assert np.array_equal(a.expected_depth, b.expected_depth)

    def test_permutation_invariance(self, rng):
        scene = random_scene(rng, 25)
        cam = make_camera(seed=7)
        perm = rng.permutation(25)
        shuffled = GaussianScene(
            scene.means[perm], scene.log_scales[perm], scene.orientations[perm],
            scene.opacity_logits[perm], scene.colors[perm], scene.background,
        )
        assert np.abs(render(scene, cam).rgb - render(shuffled, cam).rgb).max() < 1e-6

    def test_output_bounds(self, rng):
        for seed in range(3):
            local = np.random.default_rng(seed + 50)
            scene = random_scene(local, 40, logit_hi=4.0)
            out = render(scene, make_camera(seed=seed))
            assert out.alpha.min() >= 0.0 and out.alpha.max() <= 1.0
            assert out.rgb.min() >= 0.0 and out.rgb.max() <= 1.0 + 1e-6
            assert np.all(out.expected_depth >= 0.0)


class TestGradients:
    def test_empty_scene_zero_gradients(self, rng):
        cam = make_camera()
        g = render_with_gradients(GaussianScene(), cam, rng.normal(size=(32, 32, 3)))
        assert np.array_equal(g.d_pose.as_vector(), np.zeros(6))

    def test_zero_residual_gives_zero_gradient(self, rng):
        scene = random_scene(rng, 8)
        cam = make_camera(seed=2)
        target = render(scene, cam).rgb
        grad_image = 2.0 * (render(scene, cam).rgb - target)
        g = render_with_gradients(scene, cam, grad_image)
        assert np.array_equal(g.d_means, np.zeros_like(g.d_means))
        assert np.array_equal(g.d_pose.as_vector(), np.zeros(6))

    def test_matches_finite_differences(self):
        for seed in range(3):
            rng = np.random.default_rng(seed + 100)
            scene = random_scene(rng, 10)
            cam = make_camera(resolution=32, seed=seed)
            grad_image = rng.normal(size=(32, 32, 3))
            analytic = render_with_gradients(scene, cam, grad_image)
            checked, failed, worst = finite_difference_check(scene, cam, grad_image, analytic)
            assert checked == 10 * 13 + 6
            assert failed == 0, f"seed {seed}: {failed} dims failed, worst rel {worst:.2e}"

    def test_culled_gaussian_gets_zero_gradient(self, rng):
        cam = Camera(SE3Pose.identity(), centered_intrinsics())
        gs = [
            Gaussian3D([0, 0, 2.0], [-2.5] * 3, [1, 0, 0, 0], 0.5, [0.6] * 3),
            Gaussian3D([0, 0, -5.0], [-2.5] * 3, [1, 0, 0, 0], 0.5, [0.6] * 3),  # behind camera
        ]
        scene = GaussianScene.from_gaussians(gs)
        g = render_with_gradients(scene, cam, rng.normal(size=(32, 32, 3)))
        assert np.array_equal(g.d_means[1], np.zeros(3))
        assert np.array_equal(g.d_colors[1], np.zeros(3))
        assert np.abs(g.d_means[0]).max() > 0

    def test_rejects_bad_grad_image(self, rng):
        scene = random_scene(rng, 3)
        cam = make_camera()
        with pytest.raises(ValueError):
            render_with_gradients(scene, cam, np.zeros((8, 8, 3)))
        bad = np.zeros((32, 32, 3))
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            render_with_gradients(scene, cam, bad)
