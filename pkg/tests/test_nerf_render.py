"""Density ray marching: closed-form transmittance and cross-backend checks."""

import numpy as np
import pytest

from flowforge.errors import InvalidConfigError
from flowforge.geometry import RigidPose
from flowforge.scenefield import (
    Albedo,
    Box,
    DensityProfile,
    NerfSampling,
    Plane,
    Sphere,
    make_preset,
    mean_depth,
    median_depth,
    render_analytic,
    render_rayfield_nerf,
)


def fog_box(lo, hi, sigma):
    return Box(lo=lo, hi=hi, density=DensityProfile(mode="volume", sigma=sigma, thickness=0.1))


class TestSamplingValidation:
    def test_rejects_degenerate_range(self):
        with pytest.raises(InvalidConfigError):
            NerfSampling(near=2.0, far=2.0, steps=8)
        with pytest.raises(InvalidConfigError):
            NerfSampling(near=0.0, far=2.0, steps=8)
        with pytest.raises(InvalidConfigError):
            NerfSampling(near=1.0, far=2.0, steps=1)


class TestTransmittance:
    def test_empty_space_all_zero_black(self, small_intrinsics, identity_pose):
        field, image = render_rayfield_nerf(
            [], small_intrinsics, identity_pose, NerfSampling(1.0, 5.0, 16)
        )
        assert field.total_weight().max() == 0.0
        assert image.max() == 0.0

    def test_opaque_slab_takes_all_weight(self, small_intrinsics, identity_pose):
        # sigma so large the first covered interval absorbs everything.
        slab = fog_box((-9, -9, 2.0), (9, 9, 2.25), sigma=1e9)
        sampling = NerfSampling(1.0, 5.0, 16)  # dt = 0.25, slab = interval [2.0, 2.25]
        field, _ = render_rayfield_nerf([slab], small_intrinsics, identity_pose, sampling)
        center = field.weights[int(small_intrinsics.cy), int(small_intrinsics.cx)]
        i = np.argmax(field.t_lo >= 2.0 - 1e-9)
        assert center[i] == pytest.approx(1.0, abs=1e-12)
        assert center[i + 1 :].max() == 0.0

    def test_uniform_sigma_weight_ratio(self, small_intrinsics, identity_pose):
        # Two equal-length intervals of constant sigma: w2 = w1 * exp(-sigma dt).
        sigma = 0.8
        fog = fog_box((-9, -9, 1.0), (9, 9, 6.0), sigma=sigma)
        sampling = NerfSampling(2.0, 4.0, 8)
        field, _ = render_rayfield_nerf([fog], small_intrinsics, identity_pose, sampling)
        w = field.weights[int(small_intrinsics.cy), int(small_intrinsics.cx)]
        dt = sampling.dt
        np.testing.assert_allclose(w[1], w[0] * np.exp(-sigma * dt), rtol=1e-9)
        np.testing.assert_allclose(w[5], w[4] * np.exp(-sigma * dt), rtol=1e-9)

    def test_weight_sum_never_exceeds_one(self, intrinsics, identity_pose):
        scene = make_preset("oracle", seed=3)
        field, _ = render_rayfield_nerf(
            list(scene.primitives), intrinsics, identity_pose, scene.sampling
        )
        assert field.total_weight().max() <= 1.0 + 1e-6


class TestCrossBackendDepth:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_median_matches_analytic_within_two_steps(self, seed):
        scene = make_preset("oracle", seed=seed)
        prims = list(scene.primitives)
        analytic_depth, _ = render_analytic(prims, scene.intrinsics, scene.base_pose)
        field, _ = render_rayfield_nerf(
            prims, scene.intrinsics, scene.base_pose, scene.sampling
        )
        med = median_depth(field, mode="nerf")
        both = analytic_depth.valid & med.valid
        assert both.mean() > 0.95
        err = np.abs(med.values - analytic_depth.values)[both]
        tol = 2 * scene.sampling.dt
        # Silhouette-grazing rays see thin chords; all but a boundary
        # band well under 1% of pixels must agree.
        assert np.mean(err <= tol) >= 0.99
        assert np.quantile(err, 0.9) <= tol / 2

    def test_mean_matches_analytic_on_single_surface(self, intrinsics, identity_pose):
        wall = Plane(normal=(0.0, 0.0, -1.0), offset=-5.0)
        sampling = NerfSampling(1.0, 8.0, 200)
        field, _ = render_rayfield_nerf([wall], intrinsics, identity_pose, sampling)
        mean = mean_depth(field)
        med = median_depth(field, mode="nerf")
        assert mean.valid.all() and med.valid.all()
        assert np.abs(mean.values - 5.0).max() <= 2 * sampling.dt
        assert np.abs(med.values - 5.0).max() <= 2 * sampling.dt


class TestRenderedColor:
    def test_wall_shows_its_albedo(self, small_intrinsics, identity_pose):
        wall = Plane(
            normal=(0.0, 0.0, -1.0),
            offset=-4.0,
            albedo=Albedo(kind="constant", color_a=(0.3, 0.6, 0.9)),
        )
        _, image = render_rayfield_nerf(
            [wall], small_intrinsics, identity_pose, NerfSampling(1.0, 6.0, 100)
        )
        center = image[int(small_intrinsics.cy), int(small_intrinsics.cx)]
        np.testing.assert_allclose(center, [0.3, 0.6, 0.9], atol=2e-3)
