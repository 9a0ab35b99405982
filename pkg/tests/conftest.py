from pathlib import Path

import numpy as np
import pytest

from circular_pat.config import ExperimentConfig, build_config
from circular_pat.core import Blob, Grid3, PhantomSpec, ScalarField3, UniformAxis, sample_phantom
from circular_pat.forward import CylindricalSinogram


@pytest.fixture
def small_grid() -> Grid3:
    return Grid3.centered((16, 16, 6), (0.05, 0.05, 0.1))


@pytest.fixture
def blob_field(small_grid) -> ScalarField3:
    return sample_phantom(PhantomSpec((Blob((0.05, -0.03, 0.0), 0.08),)), small_grid)


@pytest.fixture
def even_field() -> ScalarField3:
    grid = Grid3.centered((9, 9, 9), (0.1, 0.1, 0.1))
    return sample_phantom(PhantomSpec((Blob((0.1, 0.0, 0.0), 0.08),), symmetrize_x1=True), grid)


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    """A cylinder experiment small enough to run in tests"""
    return build_config(
        {
            "grid.counts": [9, 9, 5],
            "grid.spacing": [0.1, 0.1, 0.1],
            "phantom.blobs": [{"center": [0.0, 0.0, 0.0], "sigma": 0.08}],
            "axes.n_theta": 8,
            "axes.z": {"start": -0.6, "stop": 0.6, "step": 0.1},
            "axes.t_step": 0.1,
            "quadrature.n_alpha": 16,
            "quadrature.cap_polar": 6,
            "quadrature.cap_azimuth": 12,
        }
    )


@pytest.fixture
def synthetic_sinogram(tiny_config) -> CylindricalSinogram:
    """A cylindrical sinogram with smooth made-up values on the axes of tiny_config"""
    g = tiny_config.geometry
    theta = UniformAxis.periodic(tiny_config.axes.n_theta)
    z_axis = tiny_config.axes.z.axis()
    t_axis = tiny_config.t_axis()
    t = t_axis.values
    values = np.exp(-((t - 1.0) ** 2) / 0.05)[None, None, :] * np.ones((theta.count, z_axis.count, 1))
    return CylindricalSinogram(g.R, g.r_det, theta, z_axis, t_axis, values)


@pytest.fixture
def out_dir(tmp_path) -> Path:
    path = tmp_path / "out"
    path.mkdir()
    return path
