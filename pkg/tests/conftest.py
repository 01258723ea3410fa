import numpy as np
import pytest

from vicsekfp.grid import Field, GridSpec


def wrapped_gaussian(z, z0, width, period, n_images=4):
    acc = np.zeros_like(np.asarray(z, dtype=np.float64))
    for m in range(-n_images, n_images + 1):
        acc = acc + np.exp(-((z - z0 + m * period) ** 2) / (2.0 * width**2))
    return acc


def smooth_bump_field(grid: GridSpec, floor=0.2, amp=1.0, width=None, theta_amp=0.5,
                      theta_freq=1):
    """Periodically smooth positive datum: floor + separable wrapped bump."""
    width = width or grid.L / 8.0
    X, Y = np.meshgrid(grid.xs, grid.xs, indexing="ij")
    bx = wrapped_gaussian(X, grid.L / 2.0, width, grid.L)
    by = wrapped_gaussian(Y, grid.L / 2.0, width, grid.L)
    prof = 1.0 + theta_amp * np.cos(theta_freq * grid.thetas)
    vals = floor + amp * (bx * by)[:, :, None] * prof[None, None, :]
    return Field(grid, vals, density=True)


@pytest.fixture
def small_grid():
    return GridSpec(nx=8, L=2.0, ntheta=16, dt=0.01)


@pytest.fixture
def medium_grid():
    return GridSpec(nx=16, L=4.0, ntheta=32, dt=0.01)
