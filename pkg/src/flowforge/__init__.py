"""Synthetic-scene flow/stereo label generation with self-assessment masks."""

__version__ = "0.1.0"

from .geometry import CameraIntrinsics, RigidPose

__all__ = ["CameraIntrinsics", "RigidPose", "__version__"]
