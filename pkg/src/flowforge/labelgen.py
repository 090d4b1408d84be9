"""Optical-flow and stereo-disparity labels from pose pairs, plus occlusion.

Flow labels follow the two-step chain: lift every frame-1 pixel with its
rendered depth, project into the second camera, and subtract pixel
coordinates. Stereo disparity is the horizontal-only special case of the
same chain, or directly baseline * fx / Z.

Occlusion of a reprojected point is decided either by integrating the
second view's ray-weight field in front of the point (density backends)
or by forward-backward flow consistency (splat backends).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import CameraIntrinsics, RigidPose, backproject, project
from .interp import in_frame, sample_bilinear
from .scenefield.field import DepthMap, RayWeightField

__all__ = [
    "FlowField",
    "DisparityMap",
    "OcclusionMask",
    "reproject",
    "flow_from_depth",
    "disparity_from_flow",
    "disparity_from_depth",
    "occlusion_by_ray_integral",
    "occlusion_by_fb_check",
]

RECTIFICATION_TOL = 0.01  # px of vertical flow tolerated in a stereo pair
FB_ALPHA = 0.01
FB_BETA = 0.5
OCCLUSION_THRESHOLD = 0.3


@dataclass(frozen=True)
class FlowField:
    """Per-pixel (du, dv) displacement in pixels with a validity flag."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 3 or values.shape[2] != 2 or values.shape[:2] != valid.shape:
            raise InvalidInputError("flow must be (H, W, 2) with matching validity")
        if values[valid].size and not np.all(np.isfinite(values[valid])):
            raise InvalidInputError("valid flow entries must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape


@dataclass(frozen=True)
class DisparityMap:
    """Per-pixel non-negative disparity in pixels with a validity flag."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        valid = np.asarray(self.valid, dtype=bool)
        if values.shape != valid.shape or values.ndim != 2:
            raise InvalidInputError("disparity must be (H, W) with matching validity")
        if values[valid].size and (
            not np.all(np.isfinite(values[valid])) or np.min(values[valid]) < 0
        ):
            raise InvalidInputError("valid disparities must be finite and >= 0")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape


@dataclass(frozen=True)
class OcclusionMask:
    """Binary per-pixel visibility: True/1 = visible, False/0 = occluded."""

    visible: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "visible", np.asarray(self.visible, dtype=bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.visible.shape


def reproject(
    depth1: DepthMap,
    intrinsics: CameraIntrinsics,
    pose1: RigidPose,
    pose2: RigidPose,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map every frame-1 pixel into frame 2 via its depth.

    Returns (uv2, z2, ok): target pixel coordinates (H, W, 2), target
    camera depth (H, W), and validity (source depth valid, in front of
    the second camera, and inside its frame).
    """
    u, v = intrinsics.pixel_grid()
    uv1 = np.stack([u, v], axis=-1)
    safe_depth = np.where(depth1.valid, depth1.values, 1.0)
    world = backproject(uv1, safe_depth, intrinsics, pose1)
    uv2, z2, behind = project(world, intrinsics, pose2)
    ok = depth1.valid & ~behind & in_frame(uv2, intrinsics.width, intrinsics.height)
    return uv2, z2, ok


def flow_from_depth(
    depth1: DepthMap,
    intrinsics: CameraIntrinsics,
    pose1: RigidPose,
    pose2: RigidPose,
) -> FlowField:
    """Flow field frame1 -> frame2 induced by depth and camera motion."""
    u, v = intrinsics.pixel_grid()
    uv2, _, ok = reproject(depth1, intrinsics, pose1, pose2)
    flow = uv2 - np.stack([u, v], axis=-1)
    flow = np.where(ok[..., None], flow, 0.0)
    return FlowField(flow, ok)


def disparity_from_flow(flow: FlowField) -> DisparityMap:
    """|horizontal flow| of a rectified pair; vertical residue invalidates."""
    dv = np.abs(flow.values[..., 1])
    ok = flow.valid & (dv <= RECTIFICATION_TOL)
    d = np.where(ok, np.abs(flow.values[..., 0]), 0.0)
    return DisparityMap(d, ok)


def disparity_from_depth(depth: DepthMap, baseline: float, fx: float) -> DisparityMap:
    """Direct pinhole disparity baseline * fx / Z."""
    if baseline <= 0:
        raise InvalidInputError("baseline must be positive")
    d = np.where(depth.valid, baseline * fx / np.where(depth.valid, depth.values, 1.0), 0.0)
    return DisparityMap(d, depth.valid.copy())


def occlusion_by_ray_integral(
    field2: RayWeightField,
    uv2: np.ndarray,
    z2: np.ndarray,
    ok: np.ndarray,
    threshold: float = OCCLUSION_THRESHOLD,
    margin: float | None = None,
) -> OcclusionMask:
    """Visibility from accumulated surface mass in front of the target point.

    For each reprojected point, sums the second view's ray weights at
    samples strictly nearer than the point's depth minus a margin (the
    margin keeps a surface from occluding itself). Points out of frame
    or otherwise invalid are occluded.
    """
    if margin is None:
        if field2.kind == "interval":
            margin = 2.0 * float(np.median(field2.t_hi - field2.t_lo))
        else:
            margin = 0.0
    h, w = field2.shape
    rows = np.clip(np.rint(np.where(ok, uv2[..., 1], 0)).astype(np.int64), 0, h - 1)
    cols = np.clip(np.rint(np.where(ok, uv2[..., 0], 0)).astype(np.int64), 0, w - 1)
    ray_weights = field2.weights[rows, cols]  # (H, W, S)
    nearer = field2.t_mid[None, None, :] < (z2 - margin)[..., None]
    occ = np.sum(ray_weights * nearer, axis=2)
    visible = ok & (occ <= threshold)
    return OcclusionMask(visible)


def occlusion_by_fb_check(
    flow_fwd: FlowField,
    flow_bwd: FlowField,
    alpha: float = FB_ALPHA,
    beta: float = FB_BETA,
) -> OcclusionMask:
    """Forward-backward consistency: large round-trip residual = occluded.

    A pixel p is occluded when
        |f_fwd(p) + f_bwd(p + f_fwd(p))|^2
            > alpha * (|f_fwd(p)|^2 + |f_bwd(p + f_fwd(p))|^2) + beta,
    with f_bwd sampled bilinearly at the forward target. Targets out of
    frame (or resting on invalid backward flow) are occluded.
    """
    if flow_fwd.shape != flow_bwd.shape:
        raise InvalidInputError("forward/backward flows must share the grid")
    h, w = flow_fwd.shape
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    target = np.stack([u, v], axis=-1) + flow_fwd.values
    bwd, ok = sample_bilinear(flow_bwd.values, target, valid=flow_bwd.valid)
    residual = np.sum((flow_fwd.values + bwd) ** 2, axis=-1)
    bound = alpha * (
        np.sum(flow_fwd.values**2, axis=-1) + np.sum(bwd**2, axis=-1)
    ) + beta
    visible = flow_fwd.valid & ok & (residual <= bound)
    return OcclusionMask(visible)
