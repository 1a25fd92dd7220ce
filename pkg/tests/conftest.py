import numpy as np
import pytest

from scbeam.model import NetworkConfig


def random_config(rng, L=None, K=None, max_ant=2, gamma=None):
    L = L or int(rng.integers(1, 4))
    K = K or int(rng.integers(1, 4))
    ant = tuple(int(a) for a in rng.integers(1, max_ant + 1, size=L))
    return NetworkConfig(
        antennas=ant,
        sigma_sq=rng.uniform(0.2, 2.0, K),
        P=rng.uniform(5.0, 50.0, L),
        gamma=rng.uniform(0.3, 3.0, K) if gamma is None else np.full(K, gamma),
    )


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
