import math

import numpy as np
import pytest

from mflocal.core import SoftmaxLinearPolicy, SpaceSpec, TabularPolicy, uniform
from mflocal.envs import identity_model, random_model
from mflocal.lemmas import LemmaRow, lemma_bounds, lemma_checks, loglog_slope, population_gaps


def test_identity_env_state_gap_is_zero():
    spaces = SpaceSpec(3, 2)
    model = identity_model(spaces)
    pi = SoftmaxLinearPolicy.random(spaces, np.random.default_rng(0))
    rows = lemma_checks(model, pi, uniform(3), 30, 4, 200, 1)
    state = [r for r in rows if r.lemma == "state_step_gap"]
    assert len(state) == 4
    for r in state:
        assert r.mean < 1e-12 and r.passed
    assert all(r.passed for r in rows)


def test_random_env_all_lemmas_pass():
    rng = np.random.default_rng(3)
    spaces = SpaceSpec(3, 3)
    model = random_model(spaces, rng, coupling=0.5)
    pi = SoftmaxLinearPolicy.random(spaces, rng)
    rows = lemma_checks(model, pi, uniform(3), 100, 10, 500, 7)
    assert {r.lemma for r in rows} == {"action_gap", "state_step_gap", "reward_gap", "flow_gap"}
    assert all(r.passed for r in rows)


def test_flow_gap_starts_at_zero():
    model = random_model(SpaceSpec(3, 2), np.random.default_rng(1))
    gaps = population_gaps(model, TabularPolicy.uniform(3, 2), [0.3, 0.3, 0.4], 17, 3, 50, 2)
    assert not gaps["flow"][:, 0].any()
    assert np.isnan(gaps["state_step"][:, 3]).all()


def test_bound_formulas():
    model = identity_model(SpaceSpec(4, 9))
    b = lemma_bounds(model, 0.0, 25, 6)
    assert b["action"] == pytest.approx(3 / 5)
    assert b["state_step"] == pytest.approx(2 * (2 + 3) / 5)
    assert b["reward"] == pytest.approx(0.0)
    assert b["flow"] == pytest.approx(2 * (2 + 3) / 5 * 6)       # S_P = 1 limit: factor t


def test_row_pass_rule():
    assert LemmaRow("action_gap", 10, 0, 1.05, 0.02, 1.0, 100).passed
    assert not LemmaRow("action_gap", 10, 0, 1.07, 0.02, 1.0, 100).passed


def test_loglog_slope():
    ns = [10, 100, 1000]
    assert loglog_slope(ns, [1 / math.sqrt(n) for n in ns]) == pytest.approx(-0.5)


def test_checks_are_seeded():
    model = random_model(SpaceSpec(2, 2), np.random.default_rng(1))
    a = lemma_checks(model, TabularPolicy.uniform(2, 2), uniform(2), 10, 3, 40, 5)
    b = lemma_checks(model, TabularPolicy.uniform(2, 2), uniform(2), 10, 3, 40, 5)
    assert a == b
