"""Empirical checks of the Lipschitz and large-population inequalities.

The Lipschitz inequalities are deterministic and checked pointwise. The
population inequalities bound expectations, so each is checked as
``mean <= bound + 3 * stderr`` over independent simulated populations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import BoundConstants, geometric_envelope
from .core import MeanFieldModel, Policy, as_sequence, l1_distance, policy_sup_distance
from .dynamics import compute_flow, induced_action_distribution, mean_reward, propagate_state
from .simulator import ExecutionMode, _episode_draws, derive_seed, initial_joint_state, simulate_batch

SIGMA_SLACK = 3.0


@dataclass(frozen=True)
class LemmaRow:
    lemma: str
    n: int
    t: int
    mean: float
    stderr: float
    bound: float
    trials: int

    @property
    def passed(self) -> bool:
        return self.mean <= self.bound + SIGMA_SLACK * self.stderr


def lipschitz_margins(model: MeanFieldModel, pi: Policy, pi_bar: Policy, mu, mu_bar) -> dict[str, tuple[float, float]]:
    """(lhs, rhs) of the three Lipschitz inequalities for one input pair."""
    k = BoundConstants(model.m_r, model.l_r, model.l_p, 0.0)
    d_mu = l1_distance(mu, mu_bar)
    d_pi = policy_sup_distance(pi, pi_bar, mu, mu_bar)
    return {
        "action": (l1_distance(induced_action_distribution(mu, pi), induced_action_distribution(mu_bar, pi_bar)),
                   d_mu + d_pi),
        "state": (l1_distance(propagate_state(mu, pi, model), propagate_state(mu_bar, pi_bar, model)),
                  k.s_tilde_p * d_mu + k.s_bar_p * d_pi),
        "reward": (abs(mean_reward(mu, pi, model) - mean_reward(mu_bar, pi_bar, model)),
                   k.s_tilde_r * d_mu + k.s_bar_r * d_pi),
    }


def population_gaps(model: MeanFieldModel, seq, mu0, n: int, T: int, trials: int, seed: int,
                    chunk: int | None = None) -> dict[str, np.ndarray]:
    """Per-trial, per-time gaps between the N-agent system and its mean-field predictions.

    The population starts from the largest-remainder rounding of ``mu0`` and
    the reference flow starts from that rounding's empirical distribution.
    """
    seq = as_sequence(seq)
    joint0 = initial_joint_state(mu0, n, "exact_rounding")
    flow = compute_flow(joint0.empirical(), seq, model, T)
    if chunk is None:
        chunk = max(1, 200_000 // (n * (T + 1)))
    gaps = {k: np.empty((trials, T + 1)) for k in ("action", "state_step", "reward", "flow")}
    gaps["state_step"][:, T] = np.nan
    for lo in range(0, trials, chunk):
        hi = min(trials, lo + chunk)
        draws = np.stack([_episode_draws(derive_seed(seed, i), T, n)[1] for i in range(lo, hi)])
        starts = np.broadcast_to(joint0.states, (hi - lo, n))
        out = simulate_batch(starts, seq, ExecutionMode.global_(), model, T, draws)
        for t in range(T + 1):
            pol = seq.at(t)
            mu_t = out["mu"][:, t]
            gaps["action"][lo:hi, t] = l1_distance(out["nu"][:, t], induced_action_distribution(mu_t, pol))
            gaps["reward"][lo:hi, t] = np.abs(out["rewards"][:, t].mean(axis=-1) - mean_reward(mu_t, pol, model))
            gaps["flow"][lo:hi, t] = l1_distance(mu_t, flow.mu[t])
            if t < T:
                gaps["state_step"][lo:hi, t] = l1_distance(out["mu"][:, t + 1], propagate_state(mu_t, pol, model))
    return gaps


def lemma_bounds(model: MeanFieldModel, l_q: float, n: int, t: int) -> dict[str, float]:
    k = BoundConstants(model.m_r, model.l_r, model.l_p, l_q)
    X, U = model.num_states, model.num_actions
    rn = math.sqrt(n)
    spread = math.sqrt(X) + math.sqrt(U)
    return {
        "action": math.sqrt(U) / rn,
        "state_step": k.c_p * spread / rn,
        "reward": (k.m_r + k.l_r * math.sqrt(U)) / rn,
        "flow": k.c_p * spread / rn * geometric_envelope(k.s_p, t),
    }


LEMMA_NAMES = {"action": "action_gap", "state_step": "state_step_gap", "reward": "reward_gap", "flow": "flow_gap"}


def lemma_checks(model: MeanFieldModel, seq, mu0, n: int, T: int, trials: int, seed: int) -> list[LemmaRow]:
    seq = as_sequence(seq)
    gaps = population_gaps(model, seq, mu0, n, T, trials, seed)
    rows = []
    for key, name in LEMMA_NAMES.items():
        for t in range(T + 1):
            if key == "state_step" and t == T:
                continue
            g = gaps[key][:, t]
            se = float(g.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
            rows.append(LemmaRow(name, n, t, float(g.mean()), se,
                                 lemma_bounds(model, seq.l_q, n, t)[key], trials))
    return rows


def loglog_slope(ns, values) -> float:
    """Least-squares slope of log(values) against log(ns)."""
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(values, float)), 1)[0])
