import numpy as np
import pytest

from pinchbeam.scenario import ScenarioConfig, sample_placement


@pytest.fixture
def small_config():
    return ScenarioConfig(N_t=4, N_r=2, K_c=2, K_s=2, S=2, M=2)


@pytest.fixture
def small_placement(small_config):
    return sample_placement(small_config, seed=42)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
