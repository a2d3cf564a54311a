"""Closed-form approximation-gap bounds and sampled Lipschitz diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import MeanFieldModel, Policy, SpaceSpec

INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class BoundConstants:
    m_r: float
    l_r: float
    l_p: float
    l_q: float
    c_p: float = field(init=False)
    s_tilde_p: float = field(init=False)
    s_bar_p: float = field(init=False)
    s_p: float = field(init=False)
    s_tilde_r: float = field(init=False)
    s_bar_r: float = field(init=False)
    s_r: float = field(init=False)

    def __post_init__(self):
        if min(self.m_r, self.l_r, self.l_p, self.l_q) < 0:
            raise ValueError("constants must be non-negative")
        derived = {
            "c_p": 2.0 + self.l_p,
            "s_tilde_p": 1.0 + 2.0 * self.l_p,
            "s_bar_p": 1.0 + self.l_p,
            "s_tilde_r": self.m_r + 2.0 * self.l_r,
            "s_bar_r": self.m_r + self.l_r,
        }
        derived["s_p"] = derived["s_tilde_p"] + self.l_q * derived["s_bar_p"]
        derived["s_r"] = derived["s_tilde_r"] + self.l_q * derived["s_bar_r"]
        for k, v in derived.items():
            object.__setattr__(self, k, v)

    @classmethod
    def from_model(cls, model: MeanFieldModel, l_q: float) -> "BoundConstants":
        return cls(model.m_r, model.l_r, model.l_p, l_q)


def _check(n: int, gamma: float) -> None:
    if n < 1:
        raise ValueError("N must be >= 1")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("discount must be in [0, 1)")


def _propagation_factor(s_p: float, gamma: float) -> float:
    """[1/(1-gamma*S_P) - 1/(1-gamma)] / (S_P - 1), continuous through S_P = 1."""
    # the bracket equals gamma*(S_P-1) / ((1-gamma*S_P)(1-gamma)), so the ratio has no pole
    return gamma / ((1.0 - gamma * s_p) * (1.0 - gamma))


def geometric_envelope(s_p: float, t: int) -> float:
    """(S_P**t - 1)/(S_P - 1), equal to t at S_P = 1."""
    if s_p == 1.0:
        return float(t)
    return (s_p**t - 1.0) / (s_p - 1.0)


def theorem1_bound(k: BoundConstants, n: int, size_x: int, size_u: int, gamma: float):
    """Gap bound for the localised mean-field policy, general coupling.

    Returns ``INFEASIBLE`` when ``gamma * S_P >= 1``.
    """
    _check(n, gamma)
    if gamma * k.s_p >= 1.0:
        return INFEASIBLE
    rn = math.sqrt(n)
    first = (2.0 / (1.0 - gamma)) * (k.m_r / rn + k.l_r * math.sqrt(size_u) / rn)
    spread = (math.sqrt(size_x) + math.sqrt(size_u)) / rn
    return first + spread * 2.0 * k.s_r * k.c_p * _propagation_factor(k.s_p, gamma)


def theorem2_bound(k: BoundConstants, n: int, size_x: int, gamma: float):
    """Gap bound when reward and transition ignore the action distribution."""
    _check(n, gamma)
    if gamma * k.s_p >= 1.0:
        return INFEASIBLE
    rn = math.sqrt(n)
    first = (2.0 / (1.0 - gamma)) * (k.m_r / rn)
    return first + (math.sqrt(size_x) / rn) * 4.0 * k.s_r * _propagation_factor(k.s_p, gamma)


def _random_simplex_pair(rng: np.random.Generator, size: int):
    kind = rng.integers(4)
    if kind == 0:
        a, b = rng.dirichlet(np.ones(size), 2)
    elif kind == 1:
        i, j = rng.integers(size, size=2)
        a, b = np.eye(size)[i], np.eye(size)[j]
    elif kind == 2:
        a = rng.dirichlet(np.full(size, 0.3))
        b = np.eye(size)[rng.integers(size)]
    else:
        a = rng.dirichlet(np.ones(size))
        b = np.abs(a + rng.normal(0, 0.05, size))
        b /= b.sum()
    return a, b


def estimate_lipschitz(target, which: str, trials: int, rng_seed: int,
                       spaces: SpaceSpec | None = None) -> float:
    """Largest observed difference ratio over random input pairs.

    ``which`` selects the quantity: ``reward_mu_nu`` and ``transition_mu_nu``
    take a model, ``policy_mu`` takes a policy. The result is a lower bound on
    the true constant.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng_seed)
    if which in ("reward_mu_nu", "transition_mu_nu"):
        model: MeanFieldModel = target
        X, U = model.num_states, model.num_actions
    elif which == "policy_mu":
        policy: Policy = target
        X, U = policy.num_states, policy.num_actions
    else:
        raise ValueError(f"unknown Lipschitz target {which!r}")
    best, used = 0.0, 0
    for _ in range(trials):
        mu1, mu2 = _random_simplex_pair(rng, X)
        if which == "policy_mu":
            den = np.abs(mu1 - mu2).sum()
            if den == 0.0:
                continue
            num = np.abs(policy.probs(mu1) - policy.probs(mu2)).sum(axis=-1).max()
        else:
            nu1, nu2 = _random_simplex_pair(rng, U)
            if rng.random() < 0.5:
                nu2 = nu1
            den = np.abs(mu1 - mu2).sum() + np.abs(nu1 - nu2).sum()
            if den == 0.0:
                continue
            if which == "reward_mu_nu":
                num = np.abs(model.reward_table(mu1, nu1) - model.reward_table(mu2, nu2)).max()
            else:
                num = np.abs(model.transition_table(mu1, nu1) - model.transition_table(mu2, nu2)).sum(axis=-1).max()
        used += 1
        best = max(best, float(num / den))
    if used == 0:
        raise ValueError("every sampled pair had a zero denominator")
    return best
