import numpy as np
import pytest


def random_spd(rng, n, scale=1.0):
    a = rng.normal(size=(n, n))
    return scale * (a @ a.T + 0.2 * n * np.eye(n))


def random_joint_cov(rng, n, blocks):
    """SPD (blocks*n x blocks*n) joint covariance with nonzero cross blocks."""
    return random_spd(rng, blocks * n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
