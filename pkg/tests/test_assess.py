"""RC / GC / VSS metrics, mask fusion, and the dataset-quality score."""

import numpy as np
import pytest

from flowforge.assess import (
    MetricMap,
    ThresholdConfig,
    fuse_labels,
    gc_l_score,
    geometric_consistency,
    reconstruction_confidence,
    rgb_to_gray,
    ssim_map,
    visual_structural_similarity,
)
from flowforge.errors import InvalidInputError, UndefinedScoreError
from flowforge.geometry import RigidPose, compose_perturbed_pose
from flowforge.labelgen import DisparityMap, FlowField, OcclusionMask
from flowforge.scenefield import DepthMap, RayWeightField, make_preset, render_analytic

from test_field import interval_field, point_field


class TestThresholdConfig:
    def test_defaults_match_binarization_table(self):
        cfg = ThresholdConfig()
        assert (cfg.rc_nerf, cfg.rc_3dgs, cfg.vss, cfg.gc) == (0.4, 0.06, 0.1, 0.01)
        assert (cfg.occ_th, cfg.rc_low, cfg.rc_high) == (0.3, 0.1, 0.9)

    def test_rejects_inverted_levels(self):
        with pytest.raises(InvalidInputError):
            ThresholdConfig(rc_low=0.9, rc_high=0.1)

    def test_rejects_unknown_json_keys(self):
        with pytest.raises(InvalidInputError):
            ThresholdConfig.from_json({"rc_nerf": 0.4, "bogus": 1.0})


class TestReconstructionConfidence:
    def test_delta_ray_zero(self):
        f = point_field([2.0], [1.0])
        rc = reconstruction_confidence(f, mode="splat")
        assert rc.values[0, 0] == 0.0

    def test_near_delta_interval_ray_near_zero(self):
        f = interval_field([(2.0, 2.0 + 1e-9, 1.0)])
        rc = reconstruction_confidence(f, mode="nerf")
        assert rc.values[0, 0] < 1e-9

    def test_uniform_mass_hand_value(self):
        # Linear cumulative over [1, 9]: t_l = 1.8, t_h = 8.2, RC = 6.4/10.
        f = interval_field([(1.0, 9.0, 1.0)])
        rc = reconstruction_confidence(f, mode="nerf")
        assert rc.values[0, 0] == pytest.approx(0.64, abs=1e-12)

    def test_unreached_high_level_scores_one(self):
        f = interval_field([(1.0, 2.0, 0.5)])
        rc = reconstruction_confidence(f, mode="nerf")
        assert rc.values[0, 0] == 1.0

    def test_step_ray_beats_diffuse_ray(self):
        step = interval_field([(2.0, 2.2, 0.98)])
        diffuse = interval_field([(1.0, 8.0, 0.98)])
        rc_step = reconstruction_confidence(step, mode="nerf").values[0, 0]
        rc_diffuse = reconstruction_confidence(diffuse, mode="nerf").values[0, 0]
        assert rc_step < rc_diffuse

    def test_splat_mode_argmin_levels(self):
        # cum = [0.2, 0.5, 0.95]: closest to 0.1 -> d=1, closest to 0.9 -> d=3.
        f = point_field([1.0, 2.0, 3.0], [0.2, 0.3, 0.45])
        rc = reconstruction_confidence(f, mode="splat")
        assert rc.values[0, 0] == pytest.approx((3.0 - 1.0) / (3.0 + 1.0))

    def test_scale_invariance(self):
        f1 = interval_field([(1.0, 2.0, 0.3), (2.0, 4.0, 0.7)])
        f2 = interval_field([(10.0, 20.0, 0.3), (20.0, 40.0, 0.7)])
        rc1 = reconstruction_confidence(f1, mode="nerf").values[0, 0]
        rc2 = reconstruction_confidence(f2, mode="nerf").values[0, 0]
        assert rc1 == pytest.approx(rc2, rel=1e-12)

    def test_range_bounds_random_fields(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(1, 6))
            depths = np.sort(rng.uniform(0.5, 9.0, size=n))
            w = rng.uniform(0, 1, size=n)
            w = w / w.sum() * rng.uniform(0.3, 1.0)
            f = point_field(depths, w)
            rc = reconstruction_confidence(f, mode="splat").values[0, 0]
            assert 0.0 <= rc <= 1.0


class TestGeometricConsistency:
    def test_self_consistent_scene_near_zero(self, intrinsics):
        scene = make_preset("oracle", seed=0)
        pose1 = scene.base_pose
        pose2 = compose_perturbed_pose(pose1, 0.02, 0.1, rng_seed=4)
        d1, _ = render_analytic(list(scene.primitives), intrinsics, pose1)
        d2, _ = render_analytic(list(scene.primitives), intrinsics, pose2)
        m = geometric_consistency(d1, d2, intrinsics, pose1, pose2)
        assert m.valid.mean() > 0.8
        # Occluded slivers excluded: check the bulk of pixels.
        assert np.quantile(m.values[m.valid], 0.95) < 1e-3

    def test_direct_arithmetic(self, small_intrinsics):
        # Z1' = 10 vs sampled Z2 = 9 -> 1/19.
        shape = (small_intrinsics.height, small_intrinsics.width)
        pose = RigidPose.identity()
        d1 = DepthMap(np.full(shape, 10.0), np.ones(shape, dtype=bool))
        d2 = DepthMap(np.full(shape, 9.0), np.ones(shape, dtype=bool))
        m = geometric_consistency(d1, d2, small_intrinsics, pose, pose)
        assert m.values[5, 5] == pytest.approx(1.0 / 19.0)

    def test_corruption_crosses_binarization_threshold(self, intrinsics):
        scene = make_preset("oracle", seed=1)
        pose1 = scene.base_pose
        pose2 = compose_perturbed_pose(pose1, 0.01, 0.05, rng_seed=9)
        d1, _ = render_analytic(list(scene.primitives), intrinsics, pose1)
        d2, _ = render_analytic(list(scene.primitives), intrinsics, pose2)
        corrupted = DepthMap(d2.values * 1.10, d2.valid)
        m = geometric_consistency(d1, corrupted, intrinsics, pose1, pose2)
        frac_above = (m.values[m.valid] > ThresholdConfig().gc).mean()
        assert frac_above > 0.95

    def test_symmetry_in_depths(self, small_intrinsics):
        shape = (small_intrinsics.height, small_intrinsics.width)
        pose = RigidPose.identity()
        a = DepthMap(np.full(shape, 6.0), np.ones(shape, dtype=bool))
        b = DepthMap(np.full(shape, 8.0), np.ones(shape, dtype=bool))
        m_ab = geometric_consistency(a, b, small_intrinsics, pose, pose)
        m_ba = geometric_consistency(b, a, small_intrinsics, pose, pose)
        np.testing.assert_allclose(m_ab.values, m_ba.values, atol=1e-12)


def smooth_random_image(rng, shape=(64, 80)):
    from scipy.ndimage import gaussian_filter

    img = rng.uniform(0, 1, size=shape + (3,))
    img = gaussian_filter(img, sigma=(3, 3, 0))
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


class TestVisualStructuralSimilarity:
    def test_identity_exact_zero(self):
        rng = np.random.default_rng(0)
        img = smooth_random_image(rng)
        zero_flow = FlowField(
            np.zeros(img.shape[:2] + (2,)), np.ones(img.shape[:2], dtype=bool)
        )
        m = visual_structural_similarity(img, img, zero_flow)
        assert m.valid.all()
        assert m.values.max() == 0.0

    def test_shift_reversing_flow_near_zero(self):
        rng = np.random.default_rng(1)
        img = smooth_random_image(rng)
        shift = 5
        img2 = np.roll(img, shift, axis=1)  # content moves +5 px in u
        flow = FlowField(
            np.tile(np.array([5.0, 0.0]), img.shape[:2] + (1,)),
            np.ones(img.shape[:2], dtype=bool),
        )
        m = visual_structural_similarity(img, img2, flow)
        interior = m.values[10:-10, 15:-15]
        assert interior.max() < 0.01

    def test_uncorrelated_noise_large(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(0, 1, size=(64, 80, 3))
        b = rng.uniform(0, 1, size=(64, 80, 3))
        zero_flow = FlowField(np.zeros((64, 80, 2)), np.ones((64, 80), dtype=bool))
        m = visual_structural_similarity(a, b, zero_flow)
        assert m.values[m.valid].mean() > 0.5

    def test_out_of_frame_warp_invalid(self):
        img = np.zeros((16, 16, 3))
        flow = FlowField(
            np.full((16, 16, 2), 100.0), np.ones((16, 16), dtype=bool)
        )
        m = visual_structural_similarity(img, img, flow)
        assert not m.valid.any()

    def test_gray_conversion_weights(self):
        img = np.zeros((4, 4, 3))
        img[..., 1] = 1.0
        assert rgb_to_gray(img)[0, 0] == pytest.approx(0.587)

    def test_ssim_map_rejects_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            ssim_map(np.zeros((4, 4)), np.zeros((5, 4)))


def all_pass_masks(shape):
    zeros = np.zeros(shape)
    ones = np.ones(shape, dtype=bool)
    return {
        "rc": MetricMap(zeros, ones),
        "occ": OcclusionMask(ones),
        "vss": MetricMap(zeros, ones),
        "gc": MetricMap(zeros, ones),
    }


class TestFuseLabels:
    shape = (10, 12)

    def flow_label(self):
        values = np.full(self.shape + (2,), 3.0)
        return FlowField(values, np.ones(self.shape, dtype=bool))

    def test_clean_masks_keep_everything(self):
        fused = fuse_labels(self.flow_label(), all_pass_masks(self.shape), ThresholdConfig(), "nerf")
        assert fused.valid.all()
        assert np.all(fused.values == 3.0)

    def test_rc_above_threshold_kills_pixel_regardless(self):
        masks = all_pass_masks(self.shape)
        rc = masks["rc"].values.copy()
        rc[4, 5] = 0.5  # above the 0.4 nerf threshold
        masks["rc"] = MetricMap(rc, np.ones(self.shape, dtype=bool))
        fused = fuse_labels(self.flow_label(), masks, ThresholdConfig(), "nerf")
        assert not fused.valid[4, 5]
        assert np.all(fused.values[4, 5] == 0.0)
        assert fused.valid.sum() == fused.valid.size - 1

    def test_rc_thresholds_differ_by_backend(self):
        masks = all_pass_masks(self.shape)
        rc = masks["rc"].values.copy()
        rc[:] = 0.2  # passes nerf (0.4), fails splat (0.06)
        masks["rc"] = MetricMap(rc, np.ones(self.shape, dtype=bool))
        assert fuse_labels(self.flow_label(), masks, ThresholdConfig(), "nerf").valid.all()
        assert not fuse_labels(self.flow_label(), masks, ThresholdConfig(), "splat").valid.any()

    def test_gc_binarization_with_gc_only_selection(self):
        masks = all_pass_masks(self.shape)
        gc = masks["gc"].values.copy()
        gc[2, 2] = 0.02  # above the 0.01 gate
        masks["gc"] = MetricMap(gc, np.ones(self.shape, dtype=bool))
        fused = fuse_labels(
            self.flow_label(), masks, ThresholdConfig(), "nerf", selection=("gc",)
        )
        assert not fused.valid[2, 2]
        assert fused.valid.sum() == fused.valid.size - 1

    def test_occlusion_gates_vss_and_gc_regions(self):
        masks = all_pass_masks(self.shape)
        vis = np.ones(self.shape, dtype=bool)
        vis[0, :] = False
        masks["occ"] = OcclusionMask(vis)
        fused = fuse_labels(
            self.flow_label(), masks, ThresholdConfig(), "nerf", selection=("vss",)
        )
        assert not fused.valid[0].any()

    def test_monotone_in_selection(self):
        rng = np.random.default_rng(7)
        cfg = ThresholdConfig()
        label = self.flow_label()
        for _ in range(50):
            masks = {
                "rc": MetricMap(rng.uniform(0, 1, self.shape), rng.random(self.shape) > 0.1),
                "occ": OcclusionMask(rng.random(self.shape) > 0.3),
                "vss": MetricMap(rng.uniform(0, 1, self.shape), rng.random(self.shape) > 0.1),
                "gc": MetricMap(rng.uniform(0, 0.05, self.shape), rng.random(self.shape) > 0.1),
            }
            valid_prev = None
            for k in range(1, 5):
                fused = fuse_labels(label, masks, cfg, "nerf", selection=("rc", "occ", "vss", "gc")[:k])
                if valid_prev is not None:
                    assert not (fused.valid & ~valid_prev).any()
                valid_prev = fused.valid

    def test_disparity_labels_zeroed_when_invalid(self):
        d = DisparityMap(np.full(self.shape, 2.5), np.ones(self.shape, dtype=bool))
        masks = all_pass_masks(self.shape)
        masks["occ"] = OcclusionMask(np.zeros(self.shape, dtype=bool))
        fused = fuse_labels(d, masks, ThresholdConfig(), "nerf")
        assert fused.kind == "disparity"
        assert not fused.valid.any()
        assert np.all(fused.values == 0.0)

    def test_missing_required_mask_rejected(self):
        masks = all_pass_masks(self.shape)
        del masks["occ"]
        with pytest.raises(InvalidInputError):
            fuse_labels(self.flow_label(), masks, ThresholdConfig(), "nerf")


class TestGcLScore:
    def test_constant_field(self):
        shape = (6, 8)
        gc = MetricMap(np.full(shape, 0.005), np.ones(shape, dtype=bool))
        occ = OcclusionMask(np.ones(shape, dtype=bool))
        assert gc_l_score(gc, occ) == pytest.approx(0.5)

    def test_occluded_half_excluded(self):
        shape = (6, 8)
        values = np.full(shape, 0.005)
        values[:, 4:] = 0.9  # huge errors hidden behind the occlusion mask
        gc = MetricMap(values, np.ones(shape, dtype=bool))
        vis = np.zeros(shape, dtype=bool)
        vis[:, :4] = True
        assert gc_l_score(gc, OcclusionMask(vis)) == pytest.approx(0.5)

    def test_empty_domain_raises(self):
        shape = (4, 4)
        gc = MetricMap(np.zeros(shape), np.ones(shape, dtype=bool))
        occ = OcclusionMask(np.zeros(shape, dtype=bool))
        with pytest.raises(UndefinedScoreError):
            gc_l_score(gc, occ)
