import numpy as np
import pytest

from macdetect.energy import EnergyParams
from macdetect.spectra import FrequencyGrid, pde2d, psd1, psd2

SNR_M_DB = 5.0
SIGMA_V2 = 10 ** (-SNR_M_DB / 10)


@pytest.fixture(scope="session")
def p1():
    return psd1()


@pytest.fixture(scope="session")
def p2():
    return psd2()


@pytest.fixture(scope="session")
def pde():
    return pde2d()


@pytest.fixture(scope="session")
def grid1():
    return FrequencyGrid(1, 4096)


@pytest.fixture
def params():
    return EnergyParams.from_snr(SNR_M_DB, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
