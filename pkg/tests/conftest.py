import numpy as np
import pytest

from pathest import (ArrayGeometry, PathParams, SamplingGrid, SearchGrid,
                     TrainingField, superpose)


@pytest.fixture
def grid20():
    return SamplingGrid.wifi_20mhz()


@pytest.fixture
def geom18():
    return ArrayGeometry.half_wavelength(1, 8)


@pytest.fixture
def tf1(grid20):
    return TrainingField.wifi(grid20, 1)


def make_tensor(paths, n_tx=1, n_rx=8, n_time=1, noise=None):
    grid = SamplingGrid.wifi_20mhz(n_time=n_time)
    geom = ArrayGeometry.half_wavelength(n_tx, n_rx)
    tf = TrainingField.wifi(grid, n_tx)
    return superpose(list(paths), geom, tf, grid, noise=noise), geom, tf, grid


def on_grid_path(grid: SearchGrid, aoa_i=40, aod_i=70, tof_i=60, dop_i=210,
                 atten=1.0 + 0.0j) -> PathParams:
    """A path whose active parameters sit exactly on grid points."""
    def pick(dim, idx):
        axis = grid.axis(dim)
        return float(axis[min(idx, axis.size - 1)])
    return PathParams(aoa=pick("aoa", aoa_i), aod=pick("aod", aod_i),
                      tof=pick("tof", tof_i), doppler=pick("doppler", dop_i),
                      atten=atten)


def wrap_diff(a: float, b: float) -> float:
    return abs(float(np.angle(np.exp(1j * (a - b)))))
