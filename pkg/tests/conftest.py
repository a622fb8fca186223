"""Shared instance generators for the test suite."""

import numpy as np
import pytest

from channelgames.channel import BCChannel, ColoredNoise, MACChannel, SumPower
from channelgames.rates import CovarianceProfile


def wishart(rng, dim, scale=1.0):
    g = rng.normal(size=(dim, dim))
    return scale * (g @ g.T)


def make_adbc(rng, num_users=2, dim=1, power=10.0):
    """Aligned channel with a PSD-ordered noise chain (weakest user first)."""
    noises = []
    acc = np.eye(dim) + 0.3 * wishart(rng, dim)
    for _ in range(num_users):
        noises.append(acc.copy())
        acc = acc + 0.4 * wishart(rng, dim) + 0.1 * np.eye(dim)
    return BCChannel([np.eye(dim)] * num_users, ColoredNoise(noises), power)


def make_bc(rng, num_users=2, n_t=2, rx_dims=None, power=10.0, colored=False):
    rx_dims = rx_dims or [n_t] * num_users
    channels = [rng.normal(size=(nk, n_t)) for nk in rx_dims]
    if colored:
        noise = ColoredNoise([wishart(rng, nk) + np.eye(nk) for nk in rx_dims])
    else:
        from channelgames.channel import WhiteNoise

        noise = WhiteNoise(1.0)
    return BCChannel(channels, noise, power)


def make_mac(rng, num_users=2, n_r=2, tx_dims=None, power=10.0, noise=1.0):
    tx_dims = tx_dims or [n_r] * num_users
    channels = [rng.normal(size=(n_r, nk)) for nk in tx_dims]
    return MACChannel(channels, noise, SumPower(power))


def feasible_profile(rng, dims, power, saturate=False):
    mats = [wishart(rng, d) for d in dims]
    total = sum(float(np.trace(m)) for m in mats)
    frac = 1.0 if saturate else rng.uniform(0.1, 1.0)
    return CovarianceProfile([m * (frac * power / total) for m in mats])


def ordered_weights(rng, num_users):
    """Strictly decreasing positive weights along the interference order."""
    raw = np.sort(rng.uniform(0.3, 2.0, size=num_users))[::-1]
    return raw + np.linspace(0.2, 0.0, num_users)


def reference_adbc(power=10.0):
    """Scalar two-user aligned channel with noise powers 1 and 3."""
    return BCChannel(
        [np.eye(1), np.eye(1)],
        ColoredNoise([np.eye(1), 3.0 * np.eye(1)]),
        power,
    )


@pytest.fixture
def adbc2():
    return reference_adbc()
