"""
Shared fixtures: spectra, nonlinearity presets and small noise scenarios
"""
import numpy as np
import pytest

from core.noise import build_scenario
from core.nonlinearity import build_nonlinearity
from core.spectral import Spectrum

# coarse mesh keeps scenario construction fast in the default run
TEST_MESH = 2.0 ** -8
TEST_TAIL = 30.0


@pytest.fixture
def spec_n2():
    """lambda_k = k^2, K = 8, N = 2, sigma = 0"""
    return Spectrum.power_family(8, 2.0, N=2)


@pytest.fixture
def spec_sigma():
    return Spectrum.power_family(8, 2.0, N=2, sigma=0.25)


@pytest.fixture
def saturating(spec_n2):
    return build_nonlinearity("saturating", spec_n2, eps=0.5)


@pytest.fixture
def cross_couple(spec_n2):
    return build_nonlinearity("cross-couple", spec_n2, eps=0.1, source=1, target=3)


@pytest.fixture
def quiet_scenario():
    """alpha = 2 with W = 0, so z = 0 everywhere"""
    return build_scenario(2.0, 0, brownian_scale=0.0)


@pytest.fixture
def make_scenario():
    """Scenario factory with a coarse mesh and room for the OU tail"""

    def factory(alpha, seed, back=12.0, forward=2.0, mesh=TEST_MESH):
        return build_scenario(alpha, seed, horizon=(back + TEST_TAIL + 1.0, forward), mesh=mesh)

    return factory


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
