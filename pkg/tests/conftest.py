import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_stochastic(rng, q, floor=0.0):
    """Dense row-stochastic matrix with every entry at least ``floor``."""
    m = rng.dirichlet(np.ones(q), size=q)
    return floor + (1 - q * floor) * m


@st.composite
def ergodic_matrices(draw, qs=(2, 3, 4, 5), floor=0.01):
    q = draw(st.sampled_from(qs))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_stochastic(np.random.default_rng(seed), q, floor)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
