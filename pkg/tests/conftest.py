import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from mflocal.core import SoftmaxLinearPolicy, SpaceSpec
from mflocal.envs import random_model

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def distributions(size):
    """Hypothesis strategy for points of the probability simplex of given size."""
    return st.lists(st.floats(0.0, 1.0), min_size=size, max_size=size).filter(
        lambda w: sum(w) > 1e-3).map(lambda w: np.asarray(w) / np.sum(w))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_env(rng):
    spaces = SpaceSpec(3, 2)
    return random_model(spaces, rng, coupling=0.4), SoftmaxLinearPolicy.random(spaces, rng)
