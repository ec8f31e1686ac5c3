import numpy as np
import pytest

from megaquant.preprocess import ExportConfig
from megaquant.spectra import PpmAxis
from megaquant.synthesis import DEFAULT_PEAK_TABLE, generate_lorentzian_basis


@pytest.fixture(scope="session")
def small_axis():
    return PpmAxis(n_points=1024, bandwidth=1250.0)


@pytest.fixture(scope="session")
def small_basis(small_axis):
    return generate_lorentzian_basis(DEFAULT_PEAK_TABLE, 2.0, small_axis)


@pytest.fixture(scope="session")
def small_export():
    return ExportConfig(n_points=256, acquisitions=("OFF", "ON"),
                        datatypes=("real",), target_norm="sum")


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
