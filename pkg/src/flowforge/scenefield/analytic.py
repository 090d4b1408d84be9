"""Exact first-hit renderer over analytic primitives (the ground-truth oracle)."""

from __future__ import annotations

import numpy as np

from ..geometry import CameraIntrinsics, RigidPose
from .field import DepthMap
from .primitives import AnalyticPrimitive, camera_ray_directions

__all__ = ["render_analytic", "first_hit_depth", "hit_visibility"]


def first_hit_depth(
    primitives: list[AnalyticPrimitive],
    origin: np.ndarray,
    dirs: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest surface depth along each ray.

    Returns (t, index): hit depth per ray (inf on miss) and the index of
    the winning primitive (-1 on miss). `dirs` must use the unit
    camera-z parameterization so t is projective depth.
    """
    shape = dirs.shape[:-1]
    best_t = np.full(shape, np.inf)
    best_i = np.full(shape, -1, dtype=np.int64)
    for i, prim in enumerate(primitives):
        t = prim.first_hit(origin, dirs)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_i = np.where(closer, i, best_i)
    return best_t, best_i


def render_analytic(
    primitives: list[AnalyticPrimitive],
    intrinsics: CameraIntrinsics,
    pose: RigidPose,
) -> tuple[DepthMap, np.ndarray]:
    """Exact depth and albedo image; pixels hitting nothing are invalid."""
    dirs = camera_ray_directions(intrinsics, pose)
    origin = pose.translation
    t, idx = first_hit_depth(primitives, origin, dirs)
    valid = np.isfinite(t) & (t > 0)
    image = np.zeros(dirs.shape[:-1] + (3,), dtype=np.float64)
    points = origin + dirs * np.where(valid, t, 0.0)[..., None]
    for i, prim in enumerate(primitives):
        mask = valid & (idx == i)
        if np.any(mask):
            image[mask] = prim.albedo.rgb(points[mask])
    depth = DepthMap(np.where(valid, t, 1.0), valid)
    return depth, image


def hit_visibility(
    primitives: list[AnalyticPrimitive],
    points: np.ndarray,
    viewer: RigidPose,
    intrinsics: CameraIntrinsics,
    tol: float = 1e-6,
) -> np.ndarray:
    """Exact visibility of world points from another camera.

    A point is visible when no primitive surface lies strictly between
    it and the viewer's center (within a relative depth tolerance) and
    it projects in front of the camera.
    """
    pts = np.asarray(points, dtype=np.float64)
    p_cam = viewer.world_to_camera(pts)
    z = p_cam[..., 2]
    front = z > 0
    safe_z = np.where(front, z, 1.0)
    dirs_cam = p_cam / safe_z[..., None]
    dirs = dirs_cam @ viewer.rotation.T
    t, _ = first_hit_depth(primitives, viewer.translation, dirs)
    unobstructed = t >= z * (1.0 - tol)
    return front & unobstructed
