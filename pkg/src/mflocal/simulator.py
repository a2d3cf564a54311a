"""Finite-population simulation under global or local execution.

All randomness of an episode comes from one generator seeded by
``derive_seed(base_seed, episode)``; the uniforms it produces are drawn up front
so that episodes can be advanced together in a batch without changing their
individual outcomes.
"""
from __future__ import annotations

import hashlib
import itertools
import struct
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import (MeanFieldModel, Policy, as_distribution, as_sequence, batch_empirical,
                   empirical_distribution, sample_categorical)
from .dynamics import MeanFieldFlow

ORACLE_BRANCH_BUDGET = 10**6
_MASK64 = (1 << 64) - 1


def derive_seed(base_seed: int, index: int) -> int:
    """Stable 64-bit seed for item ``index`` of a run seeded with ``base_seed``."""
    payload = struct.pack("<QQ", int(base_seed) & _MASK64, int(index) & _MASK64)
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class JointState:
    states: np.ndarray
    num_states: int

    def __post_init__(self):
        s = np.array(self.states, dtype=np.int64)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("joint state must be a non-empty vector")
        if np.any(s < 0) or np.any(s >= self.num_states):
            raise ValueError(f"state index out of range [0, {self.num_states})")
        s.flags.writeable = False
        object.__setattr__(self, "states", s)

    @property
    def n_agents(self) -> int:
        return self.states.size

    def empirical(self) -> np.ndarray:
        return empirical_distribution(self.states, self.num_states)


@dataclass(frozen=True)
class ExecutionMode:
    kind: str = "global"
    flow: MeanFieldFlow | None = None

    def __post_init__(self):
        if self.kind not in ("global", "local"):
            raise ValueError(f"unknown execution mode {self.kind!r}")
        if self.kind == "local" and self.flow is None:
            raise ValueError("local mode needs a mean-field flow")

    @classmethod
    def global_(cls) -> "ExecutionMode":
        return cls("global")

    @classmethod
    def local(cls, flow: MeanFieldFlow) -> "ExecutionMode":
        return cls("local", flow)

    def check_horizon(self, T: int) -> None:
        if self.kind == "local" and self.flow.horizon < T:
            raise ValueError(f"flow horizon {self.flow.horizon} exceeded: rollout needs {T}")


def largest_remainder_counts(mu0, n: int) -> np.ndarray:
    """Integer counts summing to ``n`` closest to ``n * mu0``; ties go to the lower index."""
    target = np.asarray(mu0, dtype=float) * n
    counts = np.floor(target + 1e-9).astype(np.int64)
    counts = np.minimum(counts, n)
    short = n - int(counts.sum())
    if short > 0:
        frac = target - counts
        order = sorted(range(len(frac)), key=lambda k: (-frac[k], k))
        for k in order[:short]:
            counts[k] += 1
    elif short < 0:
        # only reachable through the 1e-9 guard on a badly rounded mu0
        for k in sorted(range(len(counts)), key=lambda k: (target[k] - counts[k], k)):
            if short == 0:
                break
            if counts[k] > 0:
                counts[k] -= 1
                short += 1
    return counts


def initial_joint_state(mu0, n: int, strategy: str = "exact_rounding", rng_seed=None) -> JointState:
    if n < 1:
        raise ValueError("N must be >= 1")
    mu0 = as_distribution(mu0)
    X = mu0.size
    if strategy == "exact_rounding":
        counts = largest_remainder_counts(mu0, n)
        return JointState(np.repeat(np.arange(X), counts), X)
    if strategy == "iid_sample":
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        return JointState(sample_categorical(np.broadcast_to(mu0, (n, X)), rng.random(n)), X)
    raise ValueError(f"unknown initial-state strategy {strategy!r}")


class StepResult(NamedTuple):
    next: np.ndarray
    actions: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    rewards: np.ndarray


def _advance(states, policy: Policy, mode: ExecutionMode, t: int, model: MeanFieldModel,
             u_action, u_trans, final: bool) -> StepResult:
    """One synchronous step for a batch of populations ``states`` of shape (B, N)."""
    X, U = model.num_states, model.num_actions
    B = states.shape[0]
    bidx = np.arange(B)[:, None]
    mu_n = batch_empirical(states, X)
    if mode.kind == "local":
        pi = np.broadcast_to(policy.probs(mode.flow.mu_at(t)), (B, X, U))
    else:
        pi = policy.probs(mu_n)
    actions = sample_categorical(pi[bidx, states], u_action)
    nu_n = batch_empirical(actions, U)
    rewards = model.reward_table(mu_n, nu_n)[bidx, states, actions]
    if final:
        nxt = states
    else:
        P = model.transition_table(mu_n, nu_n)
        nxt = sample_categorical(P[bidx, states, actions], u_trans)
    return StepResult(nxt, actions, mu_n, nu_n, rewards)


def step(joint: JointState, policy: Policy, mode: ExecutionMode, t: int, model: MeanFieldModel,
         rng: np.random.Generator) -> StepResult:
    """Advance one population by one step: act on the observed distribution, move on the true one."""
    mode.check_horizon(t)
    n = joint.n_agents
    u = rng.random((2, n))
    res = _advance(joint.states[None, :], policy, mode, t, model, u[0][None], u[1][None], False)
    return StepResult(*(a[0] for a in res))


def simulate_batch(states0: np.ndarray, seq, mode: ExecutionMode, model: MeanFieldModel, T: int,
                   uniforms: np.ndarray) -> dict[str, np.ndarray]:
    """Run B populations for steps 0..T with pre-drawn uniforms of shape (B, 2, T+1, N).

    Returns per-step arrays with a leading (B, T+1) shape.
    """
    seq = as_sequence(seq)
    mode.check_horizon(T)
    states = np.asarray(states0, dtype=np.int64)
    B, N = states.shape
    X, U = model.num_states, model.num_actions
    out = {
        "states": np.empty((B, T + 1, N), dtype=np.int64),
        "actions": np.empty((B, T + 1, N), dtype=np.int64),
        "mu": np.empty((B, T + 1, X)),
        "nu": np.empty((B, T + 1, U)),
        "rewards": np.empty((B, T + 1, N)),
    }
    for t in range(T + 1):
        out["states"][:, t] = states
        res = _advance(states, seq.at(t), mode, t, model, uniforms[:, 0, t], uniforms[:, 1, t], t == T)
        out["actions"][:, t] = res.actions
        out["mu"][:, t] = res.mu
        out["nu"][:, t] = res.nu
        out["rewards"][:, t] = res.rewards
        states = res.next
    return out


def discounted_return(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Sum over t of gamma**t times the population-average reward; rewards is (..., T+1, N)."""
    avg = rewards.mean(axis=-1)
    disc = gamma ** np.arange(avg.shape[-1])
    return avg @ disc


@dataclass(frozen=True)
class RolloutRecord:
    states: np.ndarray
    actions: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    rewards: np.ndarray
    gamma: float
    ret: float
    seed: int | None = None
    mode: str = "global"

    def recomputed_return(self) -> float:
        return float(discounted_return(self.rewards, self.gamma))

    def to_dict(self) -> dict:
        return {"seed": self.seed, "mode": self.mode, "gamma": self.gamma, "return": self.ret,
                "states": self.states.tolist(), "actions": self.actions.tolist(),
                "mu": self.mu.tolist(), "nu": self.nu.tolist(), "rewards": self.rewards.tolist()}


def _episode_draws(seed: int, T: int, n: int, mu0=None, strategy=None):
    rng = np.random.default_rng(seed)
    states0 = None
    if strategy == "iid_sample":
        states0 = initial_joint_state(mu0, n, "iid_sample", rng).states
    return states0, rng.random((2, T + 1, n))


def rollout(joint0: JointState, seq, mode: ExecutionMode, model: MeanFieldModel, gamma: float,
            T: int, rng_seed: int) -> RolloutRecord:
    if T < 1:
        raise ValueError("rollout horizon must be >= 1")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("discount must be < 1")
    _, u = _episode_draws(rng_seed, T, joint0.n_agents)
    out = simulate_batch(joint0.states[None, :], seq, mode, model, T, u[None])
    rec = {k: v[0] for k, v in out.items()}
    ret = float(discounted_return(rec["rewards"], gamma))
    return RolloutRecord(gamma=gamma, ret=ret, seed=rng_seed, mode=mode.kind, **rec)


class ValueEstimate(NamedTuple):
    mean: float
    std_err: float
    episodes: int


def episode_returns(initial, seq, mode: ExecutionMode, model: MeanFieldModel, gamma: float, T: int,
                    episodes: int, base_seed: int, n_agents: int | None = None,
                    strategy: str = "exact_rounding", chunk: int = 1024) -> np.ndarray:
    """Discounted population-average return of each episode, in episode order."""
    if isinstance(initial, JointState):
        fixed, n = initial.states, initial.n_agents
        strategy = "fixed"
    else:
        if n_agents is None:
            raise ValueError("n_agents is required when starting from a distribution")
        n = n_agents
        fixed = None
        if strategy == "exact_rounding":
            fixed = initial_joint_state(initial, n, "exact_rounding").states
    mu0 = None if isinstance(initial, JointState) else as_distribution(initial)
    seq = as_sequence(seq)
    returns = np.empty(episodes)
    for lo in range(0, episodes, chunk):
        hi = min(episodes, lo + chunk)
        starts, draws = [], []
        for e in range(lo, hi):
            s0, u = _episode_draws(derive_seed(base_seed, e), T, n, mu0, strategy)
            starts.append(fixed if s0 is None else s0)
            draws.append(u)
        out = simulate_batch(np.stack(starts), seq, mode, model, T, np.stack(draws))
        returns[lo:hi] = discounted_return(out["rewards"], gamma)
    return returns


def estimate_value(initial, seq, mode: ExecutionMode, model: MeanFieldModel, gamma: float, T: int,
                   episodes: int, base_seed: int, n_agents: int | None = None,
                   strategy: str = "exact_rounding") -> ValueEstimate:
    """Monte-Carlo mean and standard error of the N-agent discounted return.

    ``initial`` is either a fixed ``JointState`` or a distribution, in which case
    each episode builds its own joint state with ``strategy``.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("discount must be < 1")
    returns = episode_returns(initial, seq, mode, model, gamma, T, episodes, base_seed,
                              n_agents, strategy)
    if episodes == 1:
        warnings.warn("single episode: standard error reported as 0", RuntimeWarning, stacklevel=2)
        return ValueEstimate(float(returns[0]), 0.0, 1)
    return ValueEstimate(float(returns.mean()), float(returns.std(ddof=1) / np.sqrt(episodes)), episodes)


def exact_small_system_value(joint0: JointState, seq, mode: ExecutionMode, model: MeanFieldModel,
                             gamma: float, T: int) -> float:
    """Exact expected discounted return by enumerating every action and transition outcome.

    Probability mass is carried forward over joint states, so identical joint
    states reached along different branches are merged rather than re-expanded.
    """
    seq = as_sequence(seq)
    mode.check_horizon(T)
    X, U = model.num_states, model.num_actions
    n = joint0.n_agents
    worst = (T + 1) * X**n * U**n * X**n
    if worst > ORACLE_BRANCH_BUDGET:
        raise ValueError("instance too large for oracle")
    frontier = {tuple(int(s) for s in joint0.states): 1.0}
    value = 0.0
    for t in range(T + 1):
        policy = seq.at(t)
        nxt: dict[tuple, float] = {}
        for joint, p_joint in frontier.items():
            mu = empirical_distribution(joint, X)
            mu_obs = mode.flow.mu_at(t) if mode.kind == "local" else mu
            rows = [policy.decide(x, mu_obs) for x in joint]
            for acts in itertools.product(range(U), repeat=n):
                p_act = float(np.prod([rows[i][a] for i, a in enumerate(acts)]))
                if p_act == 0.0:
                    continue
                nu = empirical_distribution(acts, U)
                avg_r = sum(model.reward(x, a, mu, nu) for x, a in zip(joint, acts)) / n
                value += gamma**t * p_joint * p_act * avg_r
                if t == T:
                    continue
                kernels = [model.transition(x, a, mu, nu) for x, a in zip(joint, acts)]
                for succ in itertools.product(range(X), repeat=n):
                    p_succ = float(np.prod([kernels[i][y] for i, y in enumerate(succ)]))
                    if p_succ == 0.0:
                        continue
                    nxt[succ] = nxt.get(succ, 0.0) + p_joint * p_act * p_succ
        frontier = nxt
    return value
