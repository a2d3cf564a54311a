"""Finite spaces, distributions, the environment contract and the policy contract.

Distributions are plain read-only ``numpy`` vectors. Everything that evaluates a
model or a policy is vectorised over leading batch axes: a state distribution
``mu`` has shape ``(..., X)``, a policy table ``(..., X, U)``, a transition
table ``(..., X, U, X)``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

SIMPLEX_TOL = 1e-9
RENORM_TOL = 1e-6


class SimplexError(ValueError):
    pass


@dataclass(frozen=True)
class SpaceSpec:
    num_states: int
    num_actions: int

    def __post_init__(self):
        if int(self.num_states) < 1 or int(self.num_actions) < 1:
            raise ValueError("num_states and num_actions must be >= 1")


def as_distribution(weights, size: int | None = None) -> np.ndarray:
    """Validate ``weights`` as a probability vector (or a batch of them).

    Mass within ``SIMPLEX_TOL`` of one is accepted as is, within ``RENORM_TOL``
    it is renormalised, anything further off is rejected.
    """
    w = np.array(weights, dtype=float)
    if w.ndim == 0:
        raise SimplexError("distribution must be a vector")
    if size is not None and w.shape[-1] != size:
        raise SimplexError(f"expected length {size}, got {w.shape[-1]}")
    if not np.all(np.isfinite(w)):
        raise SimplexError("non-finite weight")
    if np.any(w < -SIMPLEX_TOL):
        raise SimplexError("negative weight")
    w = np.clip(w, 0.0, None)
    total = w.sum(axis=-1, keepdims=True)
    dev = np.abs(total - 1.0)
    if np.any(dev > RENORM_TOL):
        raise SimplexError(f"weights sum to {total.ravel()[np.argmax(dev)]!r}, not 1")
    if np.any(dev > SIMPLEX_TOL):
        w = w / total
    w.flags.writeable = False
    return w


def uniform(size: int) -> np.ndarray:
    return as_distribution(np.full(size, 1.0 / size))


def point_mass(index: int, size: int) -> np.ndarray:
    w = np.zeros(size)
    w[index] = 1.0
    return as_distribution(w)


def empirical_distribution(items: Sequence[int], domain_size: int) -> np.ndarray:
    """Fraction of ``items`` equal to each index in ``range(domain_size)``."""
    arr = np.asarray(items)
    if arr.size == 0:
        raise ValueError("empty population")
    if arr.ndim != 1:
        raise ValueError("items must be one-dimensional")
    if np.any(arr < 0) or np.any(arr >= domain_size):
        raise ValueError(f"index out of range [0, {domain_size})")
    counts = np.bincount(arr.astype(np.int64), minlength=domain_size)
    out = counts / arr.size
    out.flags.writeable = False
    return out


def batch_empirical(items: np.ndarray, domain_size: int) -> np.ndarray:
    """Row-wise empirical distributions of an integer array ``(..., N)``."""
    items = np.asarray(items, dtype=np.int64)
    n = items.shape[-1]
    flat = items.reshape(-1, n)
    offsets = np.arange(flat.shape[0])[:, None] * domain_size
    counts = np.bincount((flat + offsets).ravel(), minlength=flat.shape[0] * domain_size)
    return (counts.reshape(flat.shape[0], domain_size) / n).reshape(items.shape[:-1] + (domain_size,))


def l1_distance(a, b) -> float | np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"length mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    d = np.abs(a - b).sum(axis=-1)
    return float(d) if np.ndim(d) == 0 else d


def sample_categorical(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws: one index per row of ``probs`` using the given uniforms."""
    cdf = np.cumsum(probs, axis=-1)
    idx = (uniforms[..., None] >= cdf).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


class MeanFieldModel:
    """Environment contract: reward and transition driven by the population.

    Subclasses override either the scalar pair ``reward``/``transition`` or the
    vectorised pair ``reward_table``/``transition_table``; each pair has a
    default built from the other.
    """

    def __init__(self, spaces: SpaceSpec, m_r: float, l_r: float, l_p: float,
                 action_dist_free: bool = False, name: str = "model"):
        if min(m_r, l_r, l_p) < 0:
            raise ValueError("Lipschitz metadata must be non-negative")
        self.spaces = spaces
        self.m_r = float(m_r)
        self.l_r = float(l_r)
        self.l_p = float(l_p)
        self.action_dist_free = bool(action_dist_free)
        self.name = name

    @property
    def num_states(self) -> int:
        return self.spaces.num_states

    @property
    def num_actions(self) -> int:
        return self.spaces.num_actions

    def reward(self, x: int, u: int, mu, nu) -> float:
        return float(self.reward_table(np.asarray(mu, float), np.asarray(nu, float))[x, u])

    def transition(self, x: int, u: int, mu, nu) -> np.ndarray:
        return self.transition_table(np.asarray(mu, float), np.asarray(nu, float))[x, u]

    def reward_table(self, mu: np.ndarray, nu: np.ndarray) -> np.ndarray:
        X, U = self.num_states, self.num_actions
        batch = mu.shape[:-1]
        out = np.empty(batch + (X, U))
        for idx in np.ndindex(*batch):
            for x in range(X):
                for u in range(U):
                    out[idx + (x, u)] = self.reward(x, u, mu[idx], nu[idx])
        return out

    def transition_table(self, mu: np.ndarray, nu: np.ndarray) -> np.ndarray:
        X, U = self.num_states, self.num_actions
        batch = mu.shape[:-1]
        out = np.empty(batch + (X, U, X))
        for idx in np.ndindex(*batch):
            for x in range(X):
                for u in range(U):
                    out[idx + (x, u)] = self.transition(x, u, mu[idx], nu[idx])
        return out


class FunctionModel(MeanFieldModel):
    """A model given by two plain scalar callables."""

    def __init__(self, spaces: SpaceSpec, reward: Callable, transition: Callable,
                 m_r: float, l_r: float = 0.0, l_p: float = 0.0,
                 action_dist_free: bool = False, name: str = "function-model"):
        super().__init__(spaces, m_r, l_r, l_p, action_dist_free, name)
        self._reward = reward
        self._transition = transition

    def reward(self, x, u, mu, nu):
        return float(self._reward(x, u, mu, nu))

    def transition(self, x, u, mu, nu):
        return as_distribution(self._transition(x, u, mu, nu), self.num_states)


class Policy:
    """Map (state, state distribution) -> action distribution.

    Implementations provide ``probs(mu)`` returning the full ``(..., X, U)``
    table; ``decide`` reads one row of it.
    """

    num_states: int
    num_actions: int
    l_q: float = 0.0

    def probs(self, mu: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def decide(self, x: int, mu) -> np.ndarray:
        if not 0 <= x < self.num_states:
            raise ValueError(f"state {x} out of range")
        return self.probs(np.asarray(mu, dtype=float))[x]

    def to_dict(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} is not serialisable")

    def fingerprint(self) -> str:
        try:
            payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        except NotImplementedError:
            payload = repr(id(self)).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


class TabularPolicy(Policy):
    """Fixed action distribution per state; ignores the population."""

    def __init__(self, table):
        table = as_distribution(table)
        if table.ndim != 2:
            raise ValueError("table must be (num_states, num_actions)")
        self.table = table
        self.num_states, self.num_actions = table.shape
        self.l_q = 0.0

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "TabularPolicy":
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def deterministic(cls, actions: Sequence[int], num_actions: int) -> "TabularPolicy":
        t = np.zeros((len(actions), num_actions))
        t[np.arange(len(actions)), actions] = 1.0
        return cls(t)

    def probs(self, mu):
        mu = np.asarray(mu, dtype=float)
        return np.broadcast_to(self.table, mu.shape[:-1] + self.table.shape)

    def to_dict(self):
        return {"type": "tabular", "table": self.table.tolist()}


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class SoftmaxLinearPolicy(Policy):
    """Softmax over logits ``bias[x] + weight[x] @ mu``.

    Declared ``l_q = max|weight|``: the L1 change of a softmax is at most the
    sup-norm change of its logits.
    """

    def __init__(self, bias, weight):
        self.bias = np.array(bias, dtype=float)
        self.weight = np.array(weight, dtype=float)
        self.num_states, self.num_actions = self.bias.shape
        if self.weight.shape != (self.num_states, self.num_actions, self.num_states):
            raise ValueError("weight must have shape (X, U, X)")
        self.l_q = float(np.abs(self.weight).max())

    @classmethod
    def random(cls, spaces: SpaceSpec, rng: np.random.Generator, scale: float = 1.0,
               coupling: float = 1.0) -> "SoftmaxLinearPolicy":
        X, U = spaces.num_states, spaces.num_actions
        return cls(rng.normal(0.0, scale, (X, U)), rng.uniform(-coupling, coupling, (X, U, X)))

    def probs(self, mu):
        mu = np.asarray(mu, dtype=float)
        logits = self.bias + np.einsum("xuy,...y->...xu", self.weight, mu)
        return _softmax(logits)

    def to_dict(self):
        return {"type": "softmax-linear", "bias": self.bias.tolist(), "weight": self.weight.tolist()}


class FunctionPolicy(Policy):
    """Wrap ``decide(x, mu) -> pmf``; ``l_q`` is whatever the author declares."""

    def __init__(self, spaces: SpaceSpec, decide: Callable, l_q: float = 0.0):
        self.num_states = spaces.num_states
        self.num_actions = spaces.num_actions
        self._decide = decide
        self.l_q = float(l_q)

    def probs(self, mu):
        mu = np.asarray(mu, dtype=float)
        batch = mu.shape[:-1]
        out = np.empty(batch + (self.num_states, self.num_actions))
        for idx in np.ndindex(*batch):
            for x in range(self.num_states):
                out[idx + (x,)] = self._decide(x, mu[idx])
        return out


class PinnedPolicy(Policy):
    """``base`` evaluated at a fixed distribution whatever ``mu`` is passed."""

    def __init__(self, base: Policy, mu_fixed):
        self.base = base
        self.mu_fixed = as_distribution(mu_fixed, base.num_states)
        self.num_states = base.num_states
        self.num_actions = base.num_actions
        self.l_q = 0.0
        self._table = np.array(base.probs(self.mu_fixed))
        self._table.flags.writeable = False

    def probs(self, mu):
        mu = np.asarray(mu, dtype=float)
        return np.broadcast_to(self._table, mu.shape[:-1] + self._table.shape)


def policy_sup_distance(p1: Policy, p2: Policy, mu1, mu2, spaces: SpaceSpec | None = None) -> float:
    """max over states of the L1 gap between the two action distributions."""
    t1 = p1.probs(as_distribution(mu1))
    t2 = p2.probs(as_distribution(mu2))
    if spaces is not None and t1.shape != (spaces.num_states, spaces.num_actions):
        raise ValueError("policy shape does not match spaces")
    return float(np.abs(t1 - t2).sum(axis=-1).max())


_POLICY_LOADERS: dict[str, Callable[[dict], Policy]] = {
    "tabular": lambda d: TabularPolicy(d["table"]),
    "softmax-linear": lambda d: SoftmaxLinearPolicy(d["bias"], d["weight"]),
}


def register_policy_loader(kind: str, loader: Callable[[dict], Policy]) -> None:
    _POLICY_LOADERS[kind] = loader


def policy_from_dict(d: dict) -> Policy:
    try:
        loader = _POLICY_LOADERS[d["type"]]
    except KeyError:
        raise ValueError(f"unknown policy type {d.get('type')!r}") from None
    return loader(d)


class PolicySequence:
    """Time-indexed family of policies with a constant tail past its horizon."""

    STATIONARY = "stationary"
    TIME_INDEXED = "time_indexed"
    LOCALIZED = "localized"

    def __init__(self, kind: str, policies: Sequence[Policy], localized=None):
        if not policies:
            raise ValueError("a policy sequence needs at least one policy")
        if kind not in (self.STATIONARY, self.TIME_INDEXED, self.LOCALIZED):
            raise ValueError(f"unknown kind {kind!r}")
        if kind == self.STATIONARY and len(policies) != 1:
            raise ValueError("stationary sequences hold exactly one policy")
        self.kind = kind
        self.policies = tuple(policies)
        self.localized = localized
        self.num_states = policies[0].num_states
        self.num_actions = policies[0].num_actions

    @classmethod
    def stationary(cls, policy: Policy) -> "PolicySequence":
        return cls(cls.STATIONARY, [policy])

    @classmethod
    def time_indexed(cls, policies: Sequence[Policy]) -> "PolicySequence":
        return cls(cls.TIME_INDEXED, list(policies))

    @property
    def horizon(self) -> int | None:
        return None if self.kind == self.STATIONARY else len(self.policies) - 1

    @property
    def l_q(self) -> float:
        return max(p.l_q for p in self.policies)

    def at(self, t: int) -> Policy:
        if t < 0:
            raise ValueError("negative time index")
        return self.policies[min(t, len(self.policies) - 1)]

    def fingerprint(self) -> str:
        h = hashlib.sha256(self.kind.encode())
        for p in self.policies[:1] if self.kind == self.STATIONARY else self.policies:
            h.update(p.fingerprint().encode())
        return h.hexdigest()[:16]


def as_sequence(policy_or_seq) -> PolicySequence:
    if isinstance(policy_or_seq, PolicySequence):
        return policy_or_seq
    return PolicySequence.stationary(policy_or_seq)
