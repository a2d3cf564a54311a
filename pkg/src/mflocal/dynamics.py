"""Deterministic infinite-population dynamics and the mean-field value."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import MeanFieldModel, Policy, as_distribution, as_sequence

FLOW_FORMAT_VERSION = 1


def induced_action_distribution(mu, policy: Policy, table: np.ndarray | None = None) -> np.ndarray:
    """Population action distribution: per-state action rows mixed by ``mu``."""
    mu = np.asarray(mu, dtype=float)
    if table is None:
        table = policy.probs(mu)
    return np.einsum("...x,...xu->...u", mu, table)


def _tables(mu, policy):
    pi = policy.probs(mu)
    nu = np.einsum("...x,...xu->...u", mu, pi)
    return pi, nu


def propagate_state(mu, policy: Policy, model: MeanFieldModel) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    pi, nu = _tables(mu, policy)
    P = model.transition_table(mu, nu)
    return np.einsum("...x,...xu,...xuy->...y", mu, pi, P)


def mean_reward(mu, policy: Policy, model: MeanFieldModel) -> float | np.ndarray:
    mu = np.asarray(mu, dtype=float)
    pi, nu = _tables(mu, policy)
    R = model.reward_table(mu, nu)
    r = np.einsum("...x,...xu,...xu->...", mu, pi, R)
    return float(r) if np.ndim(r) == 0 else r


@dataclass(frozen=True)
class MeanFieldFlow:
    mu: np.ndarray          # (T+1, X)
    nu: np.ndarray          # (T+1, U)
    source: str = ""

    @property
    def horizon(self) -> int:
        return self.mu.shape[0] - 1

    def mu_at(self, t: int) -> np.ndarray:
        if not 0 <= t <= self.horizon:
            raise IndexError(f"flow horizon {self.horizon} exceeded at t={t}")
        return self.mu[t]

    def to_dict(self) -> dict:
        return {"version": FLOW_FORMAT_VERSION, "horizon": self.horizon, "source": self.source,
                "mu": self.mu.tolist(), "nu": self.nu.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MeanFieldFlow":
        if d.get("version") != FLOW_FORMAT_VERSION:
            raise ValueError(f"unsupported flow format version {d.get('version')!r}")
        mu = np.array(d["mu"], dtype=float)
        nu = np.array(d["nu"], dtype=float)
        if mu.shape[0] != d["horizon"] + 1 or nu.shape[0] != mu.shape[0]:
            raise ValueError("flow arrays do not match the stated horizon")
        mu.flags.writeable = False
        nu.flags.writeable = False
        return cls(mu, nu, d.get("source", ""))

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "MeanFieldFlow":
        return cls.from_dict(json.loads(text))


def compute_flow(mu0, seq, model: MeanFieldModel, T: int) -> MeanFieldFlow:
    """Iterate the mean-field recursion from ``mu0`` for ``T`` steps."""
    if T < 0:
        raise ValueError("horizon must be >= 0")
    seq = as_sequence(seq)
    X, U = model.num_states, model.num_actions
    mu = np.empty((T + 1, X))
    nu = np.empty((T + 1, U))
    mu[0] = as_distribution(mu0, X)
    for t in range(T + 1):
        policy = seq.at(t)
        pi = policy.probs(mu[t])
        nu[t] = pi.T @ mu[t]
        if t < T:
            P = model.transition_table(mu[t], nu[t])
            nxt = np.einsum("x,xu,xuy->y", mu[t], pi, P)
            mu[t + 1] = as_distribution(nxt, X)
    mu.flags.writeable = False
    nu.flags.writeable = False
    return MeanFieldFlow(mu, nu, seq.fingerprint())


def truncation_horizon(m_r: float, gamma: float, trunc_tol: float) -> int:
    """Smallest T with m_r * gamma**(T+1) / (1-gamma) <= trunc_tol."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("discount must be < 1")
    if trunc_tol <= 0:
        raise ValueError("trunc_tol must be positive")
    T = 0
    while m_r * gamma ** (T + 1) / (1.0 - gamma) > trunc_tol:
        T += 1
    return T


def mean_field_value(mu0, seq, model: MeanFieldModel, gamma: float,
                     trunc_tol: float = 1e-6) -> tuple[float, int]:
    """Discounted mean-field value, truncated where the analytic tail is below ``trunc_tol``.

    Returns ``(value, T_used)``.
    """
    if gamma >= 1.0:
        raise ValueError("discount must be < 1")
    T = truncation_horizon(model.m_r, gamma, trunc_tol)
    seq = as_sequence(seq)
    flow = compute_flow(mu0, seq, model, T)
    value = 0.0
    for t in range(T + 1):
        policy = seq.at(t)
        pi = policy.probs(flow.mu[t])
        R = model.reward_table(flow.mu[t], flow.nu[t])
        value += gamma ** t * float(np.einsum("x,xu,xu->", flow.mu[t], pi, R))
    return value, T
