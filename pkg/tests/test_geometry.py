"""Projection primitives: hand-computed cases plus round-trip properties."""

import numpy as np
import pytest

from flowforge.errors import InvalidInputError
from flowforge.geometry import (
    CameraIntrinsics,
    RigidPose,
    backproject,
    compose_perturbed_pose,
    project,
    rotation_about_axis,
    stereo_pose,
)

from conftest import random_pose


class TestIntrinsics:
    def test_rejects_nonpositive_focal(self):
        with pytest.raises(InvalidInputError):
            CameraIntrinsics(fx=0.0, fy=1.0, cx=0.0, cy=0.0, width=4, height=4)

    def test_rejects_principal_point_outside(self):
        with pytest.raises(InvalidInputError):
            CameraIntrinsics(fx=1.0, fy=1.0, cx=4.0, cy=0.0, width=4, height=4)

    def test_matrix_layout(self):
        k = CameraIntrinsics(fx=2.0, fy=3.0, cx=1.0, cy=0.5, width=4, height=4)
        np.testing.assert_allclose(
            k.matrix(), [[2.0, 0.0, 1.0], [0.0, 3.0, 0.5], [0.0, 0.0, 1.0]]
        )


class TestRigidPose:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(InvalidInputError):
            RigidPose(np.eye(3) * 1.01, np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(InvalidInputError):
            RigidPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_orthonormality_survives_long_composition_chains(self):
        rng = np.random.default_rng(11)
        pose = RigidPose.identity()
        for _ in range(10_000):
            axis = rng.normal(size=3)
            delta = RigidPose(
                rotation_about_axis(axis, rng.uniform(-0.2, 0.2)),
                rng.uniform(-0.01, 0.01, size=3),
            )
            pose = pose.compose(delta)
        drift = np.max(np.abs(pose.rotation.T @ pose.rotation - np.eye(3)))
        assert drift < 1e-9


class TestBackproject:
    def test_principal_ray(self, small_intrinsics, identity_pose):
        p = backproject(
            np.array([small_intrinsics.cx, small_intrinsics.cy]),
            1.0,
            small_intrinsics,
            identity_pose,
        )
        np.testing.assert_allclose(p, [0.0, 0.0, 1.0], atol=1e-12)

    def test_one_focal_length_offset_is_lateral_unit_slope(
        self, small_intrinsics, identity_pose
    ):
        # Similar triangles: fx pixels off-center at depth 2 -> 2 world units in x.
        uv = np.array([small_intrinsics.cx + small_intrinsics.fx, small_intrinsics.cy])
        p = backproject(uv, 2.0, small_intrinsics, identity_pose)
        np.testing.assert_allclose(p, [2.0, 0.0, 2.0], atol=1e-12)

    def test_rejects_nonpositive_depth(self, small_intrinsics, identity_pose):
        with pytest.raises(InvalidInputError):
            backproject(np.array([1.0, 1.0]), 0.0, small_intrinsics, identity_pose)

    def test_roundtrip_project_backproject_1000_random(self, intrinsics):
        rng = np.random.default_rng(7)
        n = 1000
        uv = np.stack(
            [
                rng.uniform(0, intrinsics.width - 1, size=n),
                rng.uniform(0, intrinsics.height - 1, size=n),
            ],
            axis=-1,
        )
        depth = rng.uniform(0.1, 50.0, size=n)
        pose = random_pose(rng)
        world = backproject(uv, depth, intrinsics, pose)
        uv2, depth2, behind = project(world, intrinsics, pose)
        assert not behind.any()
        np.testing.assert_allclose(uv2, uv, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(depth2, depth, rtol=1e-9)


class TestProject:
    def test_optical_axis_point(self, small_intrinsics, identity_pose):
        uv, depth, behind = project(
            np.array([0.0, 0.0, 5.0]), small_intrinsics, identity_pose
        )
        assert not behind
        np.testing.assert_allclose(uv, [small_intrinsics.cx, small_intrinsics.cy])
        assert depth == 5.0

    def test_behind_camera_flagged(self, small_intrinsics, identity_pose):
        uv, depth, behind = project(
            np.array([0.0, 0.0, -1.0]), small_intrinsics, identity_pose
        )
        assert behind
        assert depth == -1.0
        assert np.isnan(uv).all()


class TestPerturbedPose:
    def test_zero_amplitudes_return_base(self, identity_pose):
        rng = np.random.default_rng(3)
        base = random_pose(rng)
        out = compose_perturbed_pose(base, 0.0, 0.0, rng_seed=42)
        np.testing.assert_array_equal(out.rotation, base.rotation)
        np.testing.assert_array_equal(out.translation, base.translation)

    def test_deterministic_for_fixed_seed(self):
        base = RigidPose.identity()
        a = compose_perturbed_pose(base, 0.05, 0.1, rng_seed=99)
        b = compose_perturbed_pose(base, 0.05, 0.1, rng_seed=99)
        np.testing.assert_array_equal(a.rotation, b.rotation)
        np.testing.assert_array_equal(a.translation, b.translation)

    def test_amplitudes_bound_rotation_and_translation_over_1000_draws(self):
        base = RigidPose.identity()
        rot_amp, trans_amp = 0.05, 0.1
        max_angle = 0.0
        max_norm = 0.0
        for seed in range(1000):
            out = compose_perturbed_pose(base, rot_amp, trans_amp, rng_seed=seed)
            angle = np.arccos(np.clip((np.trace(out.rotation) - 1) / 2, -1, 1))
            max_angle = max(max_angle, angle)
            max_norm = max(max_norm, float(np.linalg.norm(out.translation)))
        assert max_angle <= rot_amp + 1e-12
        assert max_norm <= trans_amp + 1e-12

    def test_rejects_negative_amplitude(self):
        with pytest.raises(InvalidInputError):
            compose_perturbed_pose(RigidPose.identity(), -0.1, 0.0, rng_seed=0)

    def test_perturbation_applies_in_camera_frame(self):
        # A rotated base: the translation nudge must be expressed in its frame.
        base = RigidPose(rotation_about_axis(np.array([0, 1, 0]), 0.7), np.array([1.0, 2.0, 3.0]))
        out = compose_perturbed_pose(base, 0.0, 0.2, rng_seed=5)
        delta_world = out.translation - base.translation
        delta_cam = base.rotation.T @ delta_world
        assert np.linalg.norm(delta_cam) <= 0.2 + 1e-12


class TestStereoPose:
    def test_identity_base_shifts_along_x(self):
        out = stereo_pose(RigidPose.identity(), 0.5)
        np.testing.assert_array_equal(out.translation, [0.5, 0.0, 0.0])

    def test_rotation_bit_exact(self):
        rng = np.random.default_rng(21)
        base = random_pose(rng)
        out = stereo_pose(base, 0.25)
        assert out.rotation is base.rotation or (out.rotation == base.rotation).all()

    def test_rejects_zero_baseline(self):
        with pytest.raises(InvalidInputError):
            stereo_pose(RigidPose.identity(), 0.0)

    def test_point_projects_with_disparity_shift(self, intrinsics):
        # Reprojection oracle: horizontal shift b*fx/Z, zero vertical shift.
        rng = np.random.default_rng(13)
        base = random_pose(rng)
        baseline = 0.4
        right = stereo_pose(base, baseline)
        for _ in range(50):
            uv = np.array(
                [
                    rng.uniform(30, intrinsics.width - 30),
                    rng.uniform(20, intrinsics.height - 20),
                ]
            )
            z = rng.uniform(2.0, 20.0)
            world = backproject(uv, z, intrinsics, base)
            uv_r, z_r, behind = project(world, intrinsics, right)
            assert not behind
            expected_shift = baseline * intrinsics.fx / z
            np.testing.assert_allclose(uv[0] - uv_r[0], expected_shift, rtol=1e-9)
            np.testing.assert_allclose(uv_r[1], uv[1], atol=1e-9)
            np.testing.assert_allclose(z_r, z, rtol=1e-12)
