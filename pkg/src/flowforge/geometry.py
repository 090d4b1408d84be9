"""Pinhole camera model, rigid poses, and projection primitives.

Coordinate conventions (fixed package-wide):

  World frame: right-handed, arbitrary origin.

  Camera frame: right-handed, x right, y down, z forward along the
  optical axis. Poses are stored camera-to-world: a camera-frame point
  p_cam maps to the world as  R @ p_cam + t,  and the camera center in
  world coordinates is t.

  Image frame: u along columns (right), v along rows (down), in pixels.
  Pixel centers sit at integer coordinates, so pixel (0, 0) is the
  center of the top-left pixel and the image domain is
  [0, width-1] x [0, height-1].

  Depth: the camera-frame z coordinate of a point (projective depth),
  not its euclidean distance from the camera center. Every depth map,
  ray parameter, and weight-field sample position in this package uses
  this convention, which is what makes depth maps and reprojection
  math directly interchangeable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "CameraIntrinsics",
    "RigidPose",
    "backproject",
    "project",
    "compose_perturbed_pose",
    "stereo_pose",
    "rotation_about_axis",
]

_ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidInputError("principal point must lie inside the image")

    @property
    def shape(self) -> tuple[int, int]:
        """(height, width) of the image grid."""
        return (self.height, self.width)

    def matrix(self) -> np.ndarray:
        """3x3 calibration matrix K."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def pixel_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """(u, v) coordinate arrays of shape (height, width)."""
        v, u = np.mgrid[0 : self.height, 0 : self.width]
        return u.astype(np.float64), v.astype(np.float64)

    def to_json(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CameraIntrinsics":
        return cls(
            fx=float(obj["fx"]),
            fy=float(obj["fy"]),
            cx=float(obj["cx"]),
            cy=float(obj["cy"]),
            width=int(obj["width"]),
            height=int(obj["height"]),
        )


@dataclass(frozen=True)
class RigidPose:
    """Camera-to-world SE(3) transform.

    rotation: 3x3 orthonormal matrix with det +1.
    translation: camera center in world coordinates.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise InvalidInputError("rotation must be 3x3")
        if np.max(np.abs(R.T @ R - np.eye(3))) > _ORTHONORMAL_TOL:
            raise InvalidInputError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > _ORTHONORMAL_TOL:
            raise InvalidInputError("rotation must be proper (det +1)")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls(np.eye(3), np.zeros(3))

    def compose(self, other: "RigidPose") -> "RigidPose":
        """self followed by `other` expressed in self's camera frame."""
        return RigidPose(
            self.rotation @ other.rotation,
            self.translation + self.rotation @ other.translation,
        )

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return (pts - self.translation) @ self.rotation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def to_json(self) -> dict:
        return {
            "rotation": [float(x) for x in self.rotation.reshape(-1)],
            "translation": [float(x) for x in self.translation],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RigidPose":
        return cls(
            np.asarray(obj["rotation"], dtype=np.float64).reshape(3, 3),
            np.asarray(obj["translation"], dtype=np.float64),
        )


def backproject(
    uv: np.ndarray,
    depth: np.ndarray,
    intrinsics: CameraIntrinsics,
    pose: RigidPose,
) -> np.ndarray:
    """Lift pixels with known depth to world points.

    Args:
        uv: pixel coordinates, shape (..., 2).
        depth: camera-frame z depth, shape (...) broadcastable to uv[..., 0].
        intrinsics: pinhole parameters.
        pose: camera-to-world pose.

    Returns:
        World points, shape (..., 3).
    """
    uv = np.asarray(uv, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise InvalidInputError("backproject requires strictly positive depth")
    x = (uv[..., 0] - intrinsics.cx) / intrinsics.fx * depth
    y = (uv[..., 1] - intrinsics.cy) / intrinsics.fy * depth
    p_cam = np.stack([x, y, depth], axis=-1)
    return pose.camera_to_world(p_cam)


def project(
    points: np.ndarray,
    intrinsics: CameraIntrinsics,
    pose: RigidPose,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project world points through the pinhole model.

    Args:
        points: world points, shape (..., 3).
        intrinsics: pinhole parameters.
        pose: camera-to-world pose of the viewing camera.

    Returns:
        (uv, depth, behind): pixel coordinates (..., 2), camera-frame z
        depth (...), and a boolean flag (...) set where the point is at
        or behind the camera plane (uv is NaN there). Disposal of
        flagged points is the caller's choice.
    """
    p_cam = pose.world_to_camera(points)
    z = p_cam[..., 2]
    behind = z <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intrinsics.fx * p_cam[..., 0] / z + intrinsics.cx
        v = intrinsics.fy * p_cam[..., 1] / z + intrinsics.cy
    uv = np.stack([u, v], axis=-1)
    uv[behind] = np.nan
    return uv, z, behind


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis and angle in radians."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    kx, ky, kz = axis
    K = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def compose_perturbed_pose(
    base: RigidPose,
    rot_amplitude: float,
    trans_amplitude: float,
    rng_seed,
) -> RigidPose:
    """Randomly nudge a pose's orientation and position in its camera frame.

    The rotation angle is drawn uniformly in [0, rot_amplitude] about a
    uniformly random axis; the translation direction is uniform on the
    sphere with norm uniform in [0, trans_amplitude]. Deterministic for
    a given seed.
    """
    if rot_amplitude < 0 or trans_amplitude < 0:
        raise InvalidInputError("perturbation amplitudes must be >= 0")
    rng = np.random.default_rng(rng_seed)
    axis = rng.normal(size=3)
    norm = np.linalg.norm(axis)
    axis = axis / norm if norm > 0 else np.array([0.0, 0.0, 1.0])
    angle = rng.uniform(0.0, rot_amplitude) if rot_amplitude > 0 else 0.0
    direction = rng.normal(size=3)
    dnorm = np.linalg.norm(direction)
    direction = direction / dnorm if dnorm > 0 else np.array([1.0, 0.0, 0.0])
    magnitude = rng.uniform(0.0, trans_amplitude) if trans_amplitude > 0 else 0.0
    delta = RigidPose(rotation_about_axis(axis, angle), magnitude * direction)
    return base.compose(delta)


def stereo_pose(base: RigidPose, baseline: float) -> RigidPose:
    """Second camera of a rectified stereo pair.

    Shifted by `baseline` along the camera's +x axis; orientation is
    kept bit-identical so the pair is rectified by construction.
    """
    if baseline <= 0:
        raise InvalidInputError("baseline must be positive")
    return RigidPose(
        base.rotation, base.translation + base.rotation @ np.array([baseline, 0.0, 0.0])
    )
