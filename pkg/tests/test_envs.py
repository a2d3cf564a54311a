import numpy as np
import pytest

from mflocal.core import SpaceSpec
from mflocal.envs import AffineCoupledModel, identity_model, random_model


def test_random_model_tables_are_valid(rng):
    model = random_model(SpaceSpec(4, 3), rng, coupling=0.8)
    mu = rng.dirichlet(np.ones(4), 5)
    nu = rng.dirichlet(np.ones(3), 5)
    P = model.transition_table(mu, nu)
    assert P.shape == (5, 4, 3, 4)
    np.testing.assert_allclose(P.sum(-1), 1.0, atol=1e-12)
    R = model.reward_table(mu, nu)
    assert np.all(np.abs(R) <= model.m_r + 1e-12)


def test_scalar_and_table_agree(rng):
    model = random_model(SpaceSpec(3, 2), rng)
    mu, nu = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(2))
    assert model.reward(2, 1, mu, nu) == model.reward_table(mu, nu)[2, 1]
    np.testing.assert_array_equal(model.transition(0, 1, mu, nu), model.transition_table(mu, nu)[0, 1])


def test_action_distribution_free_variant(rng):
    model = random_model(SpaceSpec(3, 2), rng, action_dist_free=True)
    assert model.action_dist_free
    mu = rng.dirichlet(np.ones(3))
    nu1, nu2 = rng.dirichlet(np.ones(2), 2)
    np.testing.assert_array_equal(model.reward_table(mu, nu1), model.reward_table(mu, nu2))
    np.testing.assert_array_equal(model.transition_table(mu, nu1), model.transition_table(mu, nu2))


def test_identity_model():
    model = identity_model(SpaceSpec(3, 2), reward=np.ones((3, 2)))
    P = model.transition_table(np.full(3, 1 / 3), np.full(2, 0.5))
    for u in range(2):
        np.testing.assert_array_equal(P[:, u], np.eye(3))
    assert (model.l_r, model.l_p) == (0.0, 0.0)


def test_mixing_weights_validated():
    X, U = 2, 1
    z = np.zeros
    with pytest.raises(ValueError):
        AffineCoupledModel(z((X, U)), z((X, U, X)), z((X, U, U)), np.ones((X, U, X)) / 2,
                           np.ones((X, U, X, X)) / 2, np.ones((X, U, U, X)) / 2, 0.7, 0.6)
