import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def heston_params():
    from degenerate_elliptic import HestonParams
    return HestonParams(kappa=1.5, theta=0.04, sigma=0.3, rho=-0.5, r=0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
