import math

import numpy as np
import pytest

from bnls import Field, ModelParams, make_grid


def smooth_field(grid, rng, width=8.0, modes=3, amp=0.3, y_modes=2):
    """Nonvanishing smooth field: Gaussian envelope times ``2 + small Fourier terms``.

    Staying away from zero keeps ``|u|^alpha`` smooth for non-integer powers.
    """
    coords = grid.coords()
    env = np.ones(grid.shape)
    for c in coords[: grid.d]:
        env = env * np.exp(-(c**2) / width)
    mod = 2.0 + 0j * env
    for _ in range(modes):
        kx = rng.uniform(-0.6, 0.6, size=grid.d)
        phase = sum(kx[a] * coords[a] for a in range(grid.d))
        for a in grid.y_axes:
            k = rng.integers(1, y_modes + 1) * rng.choice([-1, 1])
            phase = phase + k * coords[a]
        mod = mod + amp * rng.uniform(0.2, 1.0) * np.exp(1j * (phase + rng.uniform(0, 2 * np.pi)))
    return Field(grid, env * mod)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(1, 1, 8 * math.pi, 64, 16)


@pytest.fixture(scope="session")
def gauss_grid():
    # Gaussian e^{-x^2} is resolved to round-off at dx = pi/8
    return make_grid(1, 1, 16 * math.pi, 512, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


@pytest.fixture(scope="session")
def waveguide_params():
    return ModelParams(1, 1, 1.0, 0.0)
