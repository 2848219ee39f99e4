import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rigid_log(rng, max_angle=np.pi - 0.15, max_trans=20.0):
    """Random element of the rigid tangent space: skew block + translation."""
    w = rng.normal(size=3)
    w = w / np.linalg.norm(w) * rng.uniform(0.0, max_angle)
    L = np.zeros((4, 4))
    L[:3, :3] = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    L[:3, 3] = rng.uniform(-max_trans, max_trans, 3)
    return L
