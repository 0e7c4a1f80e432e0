import numpy as np
import pytest

from so3obs.observer import ObserverGains
from so3obs.refset import spectral_bounds
from so3obs.scenario import paper_example, run

EXAMPLE_GAINS = ObserverGains(2.53, 1.65)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def example_config():
    return paper_example()


@pytest.fixture(scope="session")
def example_trace(example_config):
    return run(example_config, EXAMPLE_GAINS)


@pytest.fixture(scope="session")
def example_bounds(example_config):
    return spectral_bounds(example_config.references, 0.0, 10.0, 1e-3)
