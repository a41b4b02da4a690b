import numpy as np
import pytest
from hypothesis import settings

from plasmacharge.geometry import ellipse, unit_disk

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def disk():
    return unit_disk()


@pytest.fixture(scope="session")
def ell():
    return ellipse(1.5, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
