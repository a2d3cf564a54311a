import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mflocal.core import PinnedPolicy, PolicySequence, SoftmaxLinearPolicy, SpaceSpec, TabularPolicy
from mflocal.dynamics import compute_flow, mean_field_value, truncation_horizon
from mflocal.envs import identity_model, random_model
from mflocal.localization import LocalizedSequence, localize

from conftest import distributions


def test_identity_dynamics_pins_at_mu0(rng):
    spaces = SpaceSpec(3, 2)
    pi = SoftmaxLinearPolicy.random(spaces, rng)
    mu0 = np.array([0.2, 0.5, 0.3])
    loc = localize(pi, mu0, identity_model(spaces), 6)
    probe = rng.dirichlet(np.ones(3))
    for t in range(8):
        np.testing.assert_allclose(loc.at(t).probs(probe), pi.probs(mu0), rtol=0, atol=1e-15)


def test_population_blind_base_unchanged(rng):
    spaces = SpaceSpec(3, 2)
    base = TabularPolicy(rng.dirichlet(np.ones(2), 3))
    loc = localize(base, [0.1, 0.1, 0.8], random_model(spaces, rng), 5)
    for t in range(6):
        for mu in rng.dirichlet(np.ones(3), 4):
            np.testing.assert_array_equal(loc.at(t).probs(mu), base.probs(mu))


def test_localized_sequence_is_time_indexed(small_env):
    model, pi = small_env
    loc = localize(pi, [0.6, 0.2, 0.2], model, 4)
    assert loc.kind == PolicySequence.LOCALIZED
    assert loc.horizon == 4 and all(isinstance(p, PinnedPolicy) for p in loc.policies)
    assert not np.allclose(loc.at(0).probs([1, 0, 0]), loc.at(4).probs([1, 0, 0]))
    with pytest.raises(ValueError):
        localize(pi, [0.6, 0.2, 0.2], model, -1)


@given(st.integers(0, 2**32 - 1), distributions(3))
def test_flow_identity(seed, mu0):
    rng = np.random.default_rng(seed)
    spaces = SpaceSpec(3, 2)
    model = random_model(spaces, rng, coupling=rng.uniform(0, 1))
    pi = SoftmaxLinearPolicy.random(spaces, rng, coupling=3.0)
    a = compute_flow(mu0, pi, model, 15)
    b = compute_flow(mu0, localize(pi, mu0, model, 15), model, 15)
    np.testing.assert_allclose(a.mu, b.mu, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a.nu, b.nu, rtol=0, atol=1e-12)


def test_value_identity_with_time_indexed_base(rng):
    spaces = SpaceSpec(3, 2)
    model = random_model(spaces, rng)
    seq = PolicySequence.time_indexed([SoftmaxLinearPolicy.random(spaces, rng) for _ in range(4)])
    mu0 = [0.3, 0.3, 0.4]
    T = truncation_horizon(model.m_r, 0.8, 1e-8)
    v1, _ = mean_field_value(mu0, seq, model, 0.8, 1e-8)
    v2, _ = mean_field_value(mu0, localize(seq, mu0, model, T), model, 0.8, 1e-8)
    assert abs(v1 - v2) <= 1e-10


def test_serialization_round_trip(small_env):
    model, pi = small_env
    loc = localize(pi, [0.6, 0.2, 0.2], model, 6)
    back = LocalizedSequence.loads(loc.dumps())
    assert back.fingerprint() == loc.fingerprint()
    probe = np.array([0.1, 0.1, 0.8])
    for t in range(8):
        np.testing.assert_array_equal(back.at(t).probs(probe), loc.at(t).probs(probe))
