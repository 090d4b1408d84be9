"""Exact first-hit rendering against closed-form geometry."""

import numpy as np

from flowforge.geometry import RigidPose
from flowforge.scenefield import (
    Albedo,
    Box,
    Plane,
    Sphere,
    camera_ray_directions,
    hit_visibility,
    render_analytic,
)


def fronto_wall(z, **kw):
    return Plane(normal=(0.0, 0.0, -1.0), offset=-z, **kw)


class TestRenderAnalytic:
    def test_fronto_parallel_plane_constant_depth(self, intrinsics, identity_pose):
        depth, image = render_analytic([fronto_wall(5.0)], intrinsics, identity_pose)
        assert depth.valid.all()
        np.testing.assert_allclose(depth.values, 5.0, atol=1e-12)

    def test_sphere_center_pixel_depth(self, small_intrinsics, identity_pose):
        # Center pixel ray is the optical axis: depth = center dist - radius.
        sph = Sphere(center=(0.0, 0.0, 6.0), radius=0.5)
        depth, _ = render_analytic([sph], small_intrinsics, identity_pose)
        cy, cx = int(small_intrinsics.cy), int(small_intrinsics.cx)
        assert depth.values[cy, cx] == np.float64(5.5)
        assert not depth.valid[0, 0]  # corner ray misses

    def test_box_front_face_depth(self, small_intrinsics, identity_pose):
        box = Box(lo=(-1.0, -1.0, 3.0), hi=(1.0, 1.0, 4.0))
        depth, _ = render_analytic([box], small_intrinsics, identity_pose)
        cy, cx = int(small_intrinsics.cy), int(small_intrinsics.cx)
        assert depth.values[cy, cx] == np.float64(3.0)

    def test_nearest_primitive_wins(self, small_intrinsics, identity_pose):
        near = fronto_wall(2.0, albedo=Albedo(color_a=(1.0, 0.0, 0.0)))
        far = fronto_wall(6.0, albedo=Albedo(color_a=(0.0, 1.0, 0.0)))
        depth, image = render_analytic([far, near], small_intrinsics, identity_pose)
        np.testing.assert_allclose(depth.values, 2.0)
        np.testing.assert_allclose(image[..., 0], 1.0)

    def test_miss_marked_invalid(self, small_intrinsics, identity_pose):
        sph = Sphere(center=(0.0, 0.0, 6.0), radius=0.5)
        depth, image = render_analytic([sph], small_intrinsics, identity_pose)
        assert not depth.valid[0, 0]
        np.testing.assert_array_equal(image[0, 0], [0.0, 0.0, 0.0])

    def test_depth_is_camera_z_not_ray_length(self, small_intrinsics, identity_pose):
        # Off-axis pixels on a fronto wall must still read the plane z.
        depth, _ = render_analytic([fronto_wall(4.0)], small_intrinsics, identity_pose)
        assert abs(depth.values[0, 0] - 4.0) < 1e-12


class TestHitVisibility:
    def test_unoccluded_points_visible(self, small_intrinsics, identity_pose):
        wall = fronto_wall(5.0)
        pts = np.array([[0.0, 0.0, 5.0], [0.5, 0.2, 5.0]])
        vis = hit_visibility([wall], pts, identity_pose, small_intrinsics)
        assert vis.all()

    def test_point_behind_occluder_hidden(self, small_intrinsics, identity_pose):
        wall = fronto_wall(5.0)
        blocker = Sphere(center=(0.0, 0.0, 2.0), radius=0.5)
        pts = np.array([[0.0, 0.0, 5.0]])
        vis = hit_visibility([wall, blocker], pts, identity_pose, small_intrinsics)
        assert not vis.any()

    def test_point_behind_camera_hidden(self, small_intrinsics, identity_pose):
        pts = np.array([[0.0, 0.0, -3.0]])
        vis = hit_visibility([], pts, identity_pose, small_intrinsics)
        assert not vis.any()


class TestRayDirections:
    def test_unit_camera_z_parameterization(self, intrinsics, identity_pose):
        dirs = camera_ray_directions(intrinsics, identity_pose)
        np.testing.assert_allclose(dirs[..., 2], 1.0)

    def test_principal_pixel_points_down_axis(self, small_intrinsics, identity_pose):
        dirs = camera_ray_directions(small_intrinsics, identity_pose)
        cy, cx = int(small_intrinsics.cy), int(small_intrinsics.cx)
        np.testing.assert_allclose(dirs[cy, cx], [0.0, 0.0, 1.0], atol=1e-12)
