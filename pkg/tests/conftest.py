import numpy as np
import pytest

from posetraj.skeleton import MotionSequence, build_spec


@pytest.fixture(scope="session")
def kinect25():
    return build_spec("kinect25")


@pytest.fixture(scope="session")
def sbu15():
    return build_spec("sbu15")


def random_positions(spec, frames, rng, scale=0.5):
    """Tree-consistent random world positions (T, J, 3); limbs and view axes
    are non-degenerate with probability 1."""
    return rng.normal(size=(frames, spec.joint_count, 3)) * scale + rng.normal(size=3)


def random_sequence(spec, frames, rng, **kwargs):
    return MotionSequence(spec=spec, subjects=(random_positions(spec, frames, rng),), **kwargs)


def rotation_about(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array([
        [0, -axis[2], axis[1]],
        [axis[2], 0, -axis[0]],
        [-axis[1], axis[0], 0],
    ])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
