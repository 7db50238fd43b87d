import numpy as np
import pytest

from rso_puf.core import calibrate_noise, sample_instance


@pytest.fixture(scope="session")
def puf64():
    return sample_instance(64, seed=1)


@pytest.fixture(scope="session")
def noisy_puf64(puf64):
    sigma = calibrate_noise(puf64, 0.05)
    return puf64.with_noise(sigma)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
