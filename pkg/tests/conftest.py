import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from holefill.dataset import generate_corpus

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow,
                           HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def corpus():
    """Small synthetic corpus shared by dataset and pipeline tests."""
    return generate_corpus(6, 4, seed=11)
