import numpy as np
import pytest

from ags.gaussians import (
    Gaussian3D,
    GaussianScene,
    load_scene,
    quat_exp_tangent,
    quat_multiply,
    quat_normalize,
    quat_to_rot,
    save_scene,
)
from conftest import random_scene


class TestQuaternions:
    def test_normalize(self, rng):
        q = quat_normalize(rng.normal(size=(10, 4)))
        assert np.abs(np.linalg.norm(q, axis=1) - 1.0).max() < 1e-12

    def test_rotation_orthonormal(self, rng):
        r = quat_to_rot(quat_normalize(rng.normal(size=(20, 4))))
        eye = np.einsum("nij,nkj->nik", r, r)
        assert np.abs(eye - np.eye(3)).max() < 1e-12
        assert np.abs(np.linalg.det(r) - 1.0).max() < 1e-12

    def test_exp_tangent_zero_is_identity(self):
        q = quat_exp_tangent(np.zeros(3))
        assert np.allclose(q, [1, 0, 0, 0])

    def test_exp_tangent_matches_rotation(self, rng):
        from ags.cameras import so3_exp

        u = rng.normal(scale=0.3, size=3)
        q0 = quat_normalize(rng.normal(size=4))
        q1 = quat_multiply(q0, quat_exp_tangent(u))
        expected = quat_to_rot(q0) @ so3_exp(u)
        assert np.abs(quat_to_rot(q1) - expected).max() < 1e-12


class TestGaussian3D:
    def test_invariants_enforced(self):
        g = Gaussian3D(
            mean=[0, 0, 0],
            log_scale=[np.log(1e-9), 0.0, np.log(1e9)],
            orientation=[2.0, 0, 0, 0],
            opacity_logit=0.5,
            color=[1.5, -0.2, 0.5],
        )
        assert np.abs(np.linalg.norm(g.orientation) - 1.0) < 1e-12
        assert g.scale.min() >= 1e-6 and g.scale.max() <= 1e3
        assert 0.0 < g.opacity < 1.0
        assert g.color.min() >= 0.0 and g.color.max() <= 1.0

    def test_covariance_psd(self, rng):
        g = Gaussian3D(rng.normal(size=3), rng.uniform(-2, 0, 3), rng.normal(size=4), 0.0, [0.5] * 3)
        eig = np.linalg.eigvalsh(g.covariance())
        assert eig.min() > 0


class TestGaussianScene:
    def test_pack_unpack_roundtrip(self, rng):
        scene = random_scene(rng, 17)
        back = GaussianScene.unpack(scene.pack(), scene.background)
        assert np.array_equal(back.means, scene.means)
        assert np.abs(back.orientations - scene.orientations).max() < 1e-15
        assert np.array_equal(back.opacity_logits, scene.opacity_logits)

    def test_from_gaussians_matches_elementwise(self, rng):
        scene = random_scene(rng, 5)
        rebuilt = GaussianScene.from_gaussians(
            [scene.gaussian(i) for i in range(5)], scene.background
        )
        assert np.allclose(rebuilt.means, scene.means)

    def test_empty_scene_allowed(self):
        scene = GaussianScene()
        assert len(scene) == 0

    def test_translated(self, rng):
        scene = random_scene(rng, 4)
        moved = scene.translated([1.0, 2.0, 3.0])
        assert np.allclose(moved.means - scene.means, [1.0, 2.0, 3.0])


class TestSceneFile:
    def test_roundtrip_float32_precision(self, tmp_path, rng):
        scene = random_scene(rng, 33)
        path = str(tmp_path / "scene.ags")
        save_scene(path, scene)
        loaded = load_scene(path)
        assert len(loaded) == 33
        # payload is float32 on disk
        assert np.abs(loaded.means - scene.means).max() < 1e-6
        assert np.abs(loaded.colors - scene.colors).max() < 1e-6
        assert np.allclose(loaded.background, scene.background)

    def test_magic_line(self, tmp_path, rng):
        path = str(tmp_path / "scene.ags")
        save_scene(path, random_scene(rng, 2))
        with open(path, "rb") as f:
            assert f.readline() == b"AGSCENE v1\n"

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ags"
        path.write_bytes(b"NOTASCENE\n{}\n")
        with pytest.raises(ValueError, match="magic"):
            load_scene(str(path))

    def test_truncated_payload_rejected(self, tmp_path, rng):
        path = tmp_path / "scene.ags"
        save_scene(str(path), random_scene(rng, 8))
        data = path.read_bytes()
        path.write_bytes(data[:-20])
        with pytest.raises(ValueError, match="truncated"):
            load_scene(str(path))
