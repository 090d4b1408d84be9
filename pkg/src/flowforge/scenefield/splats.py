"""Software splat rasterizer: EWA projection and front-to-back compositing.

Each gaussian primitive is projected to the image plane with the local
affine approximation at its mean: with camera-frame covariance V and
projection jacobian J evaluated at the mean,

    cov2d = J @ V @ J.T

and the projected footprint g_k(x) = exp(-0.5 * (x - mu)' cov2d^-1 (x - mu)).
Splats are sorted by camera depth and composited front to back,

    w_k = alpha_k g_k(x) * prod_{j<k} (1 - alpha_j g_j(x)),

which keeps the per-ray weight sum at or below one. Sample positions in
the resulting field are the splats' camera-frame depths.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError
from ..geometry import CameraIntrinsics, RigidPose
from .field import RayWeightField
from .primitives import SplatPrimitive

__all__ = ["render_rayfield_splats"]

_MIN_DEPTH = 1e-6
_FOOTPRINT_NSIGMA = 4.0


def render_rayfield_splats(
    splats: list[SplatPrimitive],
    intrinsics: CameraIntrinsics,
    pose: RigidPose,
) -> tuple[RayWeightField, np.ndarray]:
    """Rasterize splats into a point-kind ray-weight field and an RGB image.

    Splats at or behind the camera plane are skipped. Output is
    invariant to the input ordering because compositing always runs in
    sorted depth order.
    """
    if not splats:
        raise InvalidInputError("splat scene must contain at least one primitive")
    h, w = intrinsics.height, intrinsics.width

    cam_means = pose.world_to_camera(np.array([s.mean for s in splats], dtype=np.float64))
    in_front = cam_means[:, 2] > _MIN_DEPTH
    order = np.argsort(cam_means[in_front][:, 2], kind="stable")
    kept = [s for s, f in zip(splats, in_front) if f]
    kept = [kept[i] for i in order]
    means = cam_means[in_front][order]

    k = len(kept)
    if k == 0:
        empty = np.zeros((h, w, 0))
        field = RayWeightField("point", np.zeros(0), np.zeros(0), empty)
        return field, np.zeros((h, w, 3))

    w_cam = pose.rotation.T  # world -> camera linear part
    u_grid, v_grid = intrinsics.pixel_grid()
    alpha_g = np.zeros((h, w, k), dtype=np.float32)
    colors = np.zeros((k, 3), dtype=np.float64)

    for i, splat in enumerate(kept):
        colors[i] = splat.color
        x, y, z = means[i]
        cov_cam = w_cam @ splat.covariance() @ w_cam.T
        fx, fy = intrinsics.fx, intrinsics.fy
        jac = np.array(
            [
                [fx / z, 0.0, -fx * x / (z * z)],
                [0.0, fy / z, -fy * y / (z * z)],
            ]
        )
        cov2d = jac @ cov_cam @ jac.T
        det = cov2d[0, 0] * cov2d[1, 1] - cov2d[0, 1] * cov2d[1, 0]
        if det <= 1e-12 or cov2d[0, 0] <= 0 or cov2d[1, 1] <= 0:
            continue
        inv = np.array([[cov2d[1, 1], -cov2d[0, 1]], [-cov2d[1, 0], cov2d[0, 0]]]) / det
        mu_u = fx * x / z + intrinsics.cx
        mu_v = fy * y / z + intrinsics.cy

        ru = _FOOTPRINT_NSIGMA * np.sqrt(cov2d[0, 0])
        rv = _FOOTPRINT_NSIGMA * np.sqrt(cov2d[1, 1])
        c0 = max(int(np.floor(mu_u - ru)), 0)
        c1 = min(int(np.ceil(mu_u + ru)) + 1, w)
        r0 = max(int(np.floor(mu_v - rv)), 0)
        r1 = min(int(np.ceil(mu_v + rv)) + 1, h)
        if c0 >= c1 or r0 >= r1:
            continue
        du = u_grid[r0:r1, c0:c1] - mu_u
        dv = v_grid[r0:r1, c0:c1] - mu_v
        q = inv[0, 0] * du * du + 2.0 * inv[0, 1] * du * dv + inv[1, 1] * dv * dv
        g = np.exp(-0.5 * q)
        alpha_g[r0:r1, c0:c1, i] = (splat.opacity * g).astype(np.float32)

    keep_one = np.ones((h, w, 1), dtype=np.float32)
    trans = np.cumprod(np.concatenate([keep_one, 1.0 - alpha_g[..., :-1]], axis=2), axis=2)
    weights = alpha_g * trans
    image = np.einsum("hwk,kc->hwc", weights.astype(np.float64), colors)
    image = np.clip(image, 0.0, 1.0)

    depths = means[:, 2].copy()
    field = RayWeightField("point", depths, depths.copy(), weights)
    return field, image
