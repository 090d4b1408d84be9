import numpy as np
import pytest

from flowforge.geometry import CameraIntrinsics, RigidPose


@pytest.fixture
def intrinsics():
    return CameraIntrinsics(fx=150.0, fy=150.0, cx=79.5, cy=63.5, width=160, height=128)


@pytest.fixture
def small_intrinsics():
    """Tiny grid with an integer principal point, handy for exact cases."""
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=16.0, cy=12.0, width=33, height=25)


@pytest.fixture
def identity_pose():
    return RigidPose.identity()


def random_pose(rng: np.random.Generator, trans_scale: float = 2.0) -> RigidPose:
    """Uniformly random orientation with a bounded random center."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    rot = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
    return RigidPose(rot, rng.uniform(-trans_scale, trans_scale, size=3))
