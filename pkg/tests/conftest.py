import numpy as np
import pytest

from jcpgnn import FadingConfig, GeometryConfig, NetworkInstance


def make_instance(gains, noise_power=1.0, p_max=1.0, weights=None, tx=None, rx=None, seed=0):
    """Hand-built instance for tests that need exact gain values."""
    gains = np.asarray(gains, dtype=np.float64)
    D, _, M = gains.shape
    if weights is None:
        weights = np.ones(D)
    if tx is None:
        tx = np.zeros((D, 2))
    if rx is None:
        rx = np.zeros((D, 2))
    return NetworkInstance(
        d_pairs=D, m_channels=M,
        tx_pos=np.asarray(tx, dtype=np.float64),
        rx_pos=np.asarray(rx, dtype=np.float64),
        gains=gains, weights=np.asarray(weights, dtype=np.float64),
        noise_power=noise_power, p_max=p_max, seed=seed,
    )


def random_instance(rng, d_pairs=3, m_channels=2, noise_power=1e-3, p_max=1.0):
    """Random positive gains with a dominant diagonal, for solver tests."""
    gains = rng.uniform(0.01, 0.2, size=(d_pairs, d_pairs, m_channels))
    idx = np.arange(d_pairs)
    gains[idx, idx, :] = rng.uniform(0.5, 2.0, size=(d_pairs, m_channels))
    return make_instance(gains, noise_power=noise_power, p_max=p_max,
                         tx=rng.uniform(0, 100, (d_pairs, 2)),
                         rx=rng.uniform(0, 100, (d_pairs, 2)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_geometry():
    return GeometryConfig(d_pairs=3, m_channels=2)


@pytest.fixture
def default_fading():
    return FadingConfig()
