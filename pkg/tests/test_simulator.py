
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mflocal.core import FunctionModel, SoftmaxLinearPolicy, SpaceSpec, TabularPolicy, point_mass
from mflocal.dynamics import compute_flow
from mflocal.envs import identity_model, random_model
from mflocal.simulator import (ExecutionMode, JointState, derive_seed, estimate_value, exact_small_system_value,
                               initial_joint_state, largest_remainder_counts, rollout, step)

from conftest import distributions


def hop_model():
    """x' = 1 if u == 1 else x; reward x + 2u."""
    return FunctionModel(SpaceSpec(2, 2), lambda x, u, mu, nu: x + 2 * u,
                         lambda x, u, mu, nu: [0.0, 1.0] if u == 1 else np.eye(2)[x], m_r=3.0)


def constant_model(c):
    return FunctionModel(SpaceSpec(2, 2), lambda *a: c, lambda x, u, mu, nu: [0.3, 0.7], m_r=abs(c))


# initial joint states

def test_exact_rounding_examples():
    np.testing.assert_array_equal(initial_joint_state([0.5, 0.5], 4).states, [0, 0, 1, 1])
    np.testing.assert_array_equal(initial_joint_state([0.3, 0.7], 10).empirical(), [0.3, 0.7])
    for strategy in ("exact_rounding", "iid_sample"):
        np.testing.assert_array_equal(initial_joint_state([1.0, 0.0], 7, strategy, 3).states, np.zeros(7))


def test_rounding_ties_go_to_lower_index():
    np.testing.assert_array_equal(largest_remainder_counts([1 / 3] * 3, 2), [1, 1, 0])


@given(distributions(4), st.integers(1, 200))
def test_largest_remainder_is_closest(mu, n):
    counts = largest_remainder_counts(mu, n)
    assert counts.sum() == n and np.all(counts >= 0)
    assert np.all(np.abs(counts - n * mu) < 1 + 1e-9)


def test_initial_state_errors():
    with pytest.raises(ValueError):
        initial_joint_state([0.5, 0.5], 0)
    with pytest.raises(ValueError):
        initial_joint_state([0.5, 0.5], 3, "bogus")
    with pytest.raises(ValueError):
        JointState(np.array([0, 3]), 2)


def test_iid_sample_is_seeded():
    a = initial_joint_state([0.2, 0.8], 50, "iid_sample", 11).states
    b = initial_joint_state([0.2, 0.8], 50, "iid_sample", 11).states
    np.testing.assert_array_equal(a, b)


def test_derive_seed_stable_and_distinct():
    assert derive_seed(0, 1) == derive_seed(0, 1)
    assert len({derive_seed(s, i) for s in range(10) for i in range(10)}) == 100
    assert 0 <= derive_seed(2**64 - 1, 5) < 2**64


# single steps

def test_identity_step_keeps_states_and_rewards():
    model = identity_model(SpaceSpec(3, 2), reward=np.arange(6.0).reshape(3, 2))
    joint = JointState(np.array([0, 2, 2, 1]), 3)
    pi = TabularPolicy.deterministic([1, 0, 1], 2)
    res = step(joint, pi, ExecutionMode.global_(), 0, model, np.random.default_rng(0))
    np.testing.assert_array_equal(res.next, joint.states)
    np.testing.assert_array_equal(res.actions, [1, 1, 1, 0])
    np.testing.assert_array_equal(res.rewards, [1, 5, 5, 2])


def test_single_agent_empirical_is_point_mass():
    model = random_model(SpaceSpec(3, 2), np.random.default_rng(1))
    res = step(JointState(np.array([2]), 3), TabularPolicy.uniform(3, 2), ExecutionMode.global_(), 0,
               model, np.random.default_rng(4))
    np.testing.assert_array_equal(res.mu, point_mass(2, 3))
    np.testing.assert_array_equal(res.nu, point_mass(int(res.actions[0]), 2))


def test_local_mode_matches_global_in_law_under_identity_dynamics():
    spaces = SpaceSpec(3, 3)
    model = identity_model(spaces)
    pi = SoftmaxLinearPolicy.random(spaces, np.random.default_rng(5), coupling=3.0)
    joint = initial_joint_state([0.2, 0.3, 0.5], 10)
    flow = compute_flow(joint.empirical(), pi, model, 3)
    counts = {}
    for mode in (ExecutionMode.global_(), ExecutionMode.local(flow)):
        rng = np.random.default_rng(99 if mode.kind == "global" else 100)
        tally = np.zeros((4, 3))
        for _ in range(10_000):
            for t in range(4):
                tally[t] += np.bincount(step(joint, pi, mode, t, model, rng).actions, minlength=3)
        counts[mode.kind] = tally / tally.sum(axis=1, keepdims=True)
    # 1e5 agent-draws per t; binomial sd of a frequency is below 0.0016
    np.testing.assert_allclose(counts["global"], counts["local"], atol=0.008)


def test_local_mode_checks_flow_horizon():
    model = identity_model(SpaceSpec(2, 2))
    flow = compute_flow([0.5, 0.5], TabularPolicy.uniform(2, 2), model, 2)
    with pytest.raises(ValueError):
        rollout(initial_joint_state([0.5, 0.5], 2), TabularPolicy.uniform(2, 2), ExecutionMode.local(flow),
                model, 0.9, 3, 0)
    with pytest.raises(ValueError):
        ExecutionMode("local")


# rollouts and estimators

def test_rollout_zero_reward_and_myopic():
    joint = initial_joint_state([0.5, 0.5], 4)
    rec = rollout(joint, TabularPolicy.uniform(2, 2), ExecutionMode.global_(), constant_model(0.0), 0.9, 5, 1)
    assert rec.ret == 0.0
    model = hop_model()
    rec = rollout(joint, TabularPolicy.uniform(2, 2), ExecutionMode.global_(), model, 0.0, 3, 2)
    assert rec.ret == pytest.approx(rec.rewards[0].mean())
    assert rec.recomputed_return() == pytest.approx(rec.ret)
    with pytest.raises(ValueError):
        rollout(joint, TabularPolicy.uniform(2, 2), ExecutionMode.global_(), model, 0.9, 0, 1)


def test_rollout_bit_identical_for_same_seed():
    model = random_model(SpaceSpec(3, 2), np.random.default_rng(0))
    pi = SoftmaxLinearPolicy.random(SpaceSpec(3, 2), np.random.default_rng(1))
    joint = initial_joint_state([0.2, 0.3, 0.5], 9)
    a = rollout(joint, pi, ExecutionMode.global_(), model, 0.9, 12, 77)
    b = rollout(joint, pi, ExecutionMode.global_(), model, 0.9, 12, 77)
    assert a.to_dict() == b.to_dict()


def test_constant_reward_estimate():
    est = estimate_value([0.5, 0.5], TabularPolicy.uniform(2, 2), ExecutionMode.global_(), constant_model(1.5),
                         0.9, 20, 50, 3, n_agents=5)
    assert est.mean == pytest.approx(1.5 * (1 - 0.9**21) / 0.1, rel=1e-12)
    assert est.std_err < 1e-12


def test_single_episode_warns():
    with pytest.warns(RuntimeWarning):
        est = estimate_value([0.5, 0.5], TabularPolicy.uniform(2, 2), ExecutionMode.global_(),
                             hop_model(), 0.9, 3, 1, 0, n_agents=2)
    assert est.std_err == 0.0


def test_estimate_value_batching_is_transparent():
    model = random_model(SpaceSpec(3, 2), np.random.default_rng(0))
    pi = SoftmaxLinearPolicy.random(SpaceSpec(3, 2), np.random.default_rng(1))
    joint = initial_joint_state([0.2, 0.3, 0.5], 6)
    est = estimate_value(joint, pi, ExecutionMode.global_(), model, 0.8, 7, 5, 42)
    singles = [rollout(joint, pi, ExecutionMode.global_(), model, 0.8, 7, derive_seed(42, e)).ret
               for e in range(5)]
    assert est.mean == pytest.approx(np.mean(singles), abs=1e-13)


def test_oracle_hand_enumeration():
    v = exact_small_system_value(JointState(np.array([0]), 2), TabularPolicy.uniform(2, 2),
                                 ExecutionMode.global_(), hop_model(), 0.5, 1)
    # t=0: E r = 0 + 2 * 0.5; t=1: in state 1 w.p. 1/2, so E r = 0.5 + 1
    assert v == pytest.approx(1.0 + 0.5 * 1.5, abs=1e-15)


def test_oracle_deterministic_and_zero_cases():
    model = identity_model(SpaceSpec(2, 2), reward=[[1.0, 0.0], [0.0, 3.0]])
    joint = JointState(np.array([0, 1]), 2)
    pi = TabularPolicy.deterministic([0, 1], 2)
    v = exact_small_system_value(joint, pi, ExecutionMode.global_(), model, 0.5, 3)
    rec = rollout(joint, pi, ExecutionMode.global_(), model, 0.5, 3, 0)
    assert v == pytest.approx(rec.ret)
    zero = exact_small_system_value(joint, TabularPolicy.uniform(2, 2), ExecutionMode.global_(),
                                    identity_model(SpaceSpec(2, 2)), 0.5, 3)
    assert zero == 0.0


def test_oracle_refuses_large_instances():
    model = identity_model(SpaceSpec(3, 3))
    with pytest.raises(ValueError, match="too large"):
        exact_small_system_value(initial_joint_state([1 / 3] * 3, 6), TabularPolicy.uniform(3, 3),
                                 ExecutionMode.global_(), model, 0.9, 3)


@pytest.mark.parametrize("kind", ["global", "local"])
def test_monte_carlo_matches_oracle_small(kind):
    rng = np.random.default_rng(8)
    spaces = SpaceSpec(2, 2)
    model = random_model(spaces, rng, coupling=0.6)
    pi = SoftmaxLinearPolicy.random(spaces, rng, coupling=2.0)
    joint = JointState(np.array([0, 1]), 2)
    mode = ExecutionMode.global_() if kind == "global" else ExecutionMode.local(
        compute_flow(joint.empirical(), pi, model, 2))
    exact = exact_small_system_value(joint, pi, mode, model, 0.9, 2)
    est = estimate_value(joint, pi, mode, model, 0.9, 2, 20_000, 5)
    assert abs(est.mean - exact) <= 3 * est.std_err
