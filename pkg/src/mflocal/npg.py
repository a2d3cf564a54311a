"""Natural policy gradient for a stationary neural mean-field policy.

The policy reads (one-hot state, population distribution) through one tanh
hidden layer and a softmax head. Training alternates an inner SGD fit of the
NPG direction against sampled advantages with the outer step
``params += eta * w``.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import (MeanFieldModel, Policy, PolicySequence, TabularPolicy, as_distribution,
                   register_policy_loader, sample_categorical, uniform)
from .dynamics import compute_flow, mean_field_value
from .simulator import derive_seed

LOG_FLOOR = 1e-12
CHECKPOINT_FORMAT = "mflocal-checkpoint"
CHECKPOINT_VERSION = 1


class MLPPolicy(Policy):
    """Softmax policy over a one-hidden-layer tanh network of (onehot(x), mu).

    Parameters are one flat vector laid out as ``[W1, b1, W2, b2]`` with
    ``W1: (H, 2X)`` and ``W2: (U, H)``.
    """

    def __init__(self, num_states: int, num_actions: int, hidden: int = 128, params=None):
        self.num_states = int(num_states)
        self.num_actions = int(num_actions)
        self.hidden = int(hidden)
        X, U, H = self.num_states, self.num_actions, self.hidden
        self._shapes = [(H, 2 * X), (H,), (U, H), (U,)]
        self.dim = sum(int(np.prod(s)) for s in self._shapes)
        if params is None:
            params = np.zeros(self.dim)
        params = np.array(params, dtype=float)
        if params.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} parameters, got {params.shape}")
        params.flags.writeable = False
        self.params = params
        self.W1, self.b1, self.W2, self.b2 = self._unpack(params)
        # |d pi|_1 <= |d logits|_inf <= ||W2||_inf * max|W1[:, mu part]| * |d mu|_1
        self.l_q = float(np.abs(self.W2).sum(axis=1).max() * np.abs(self.W1[:, X:]).max())

    def _unpack(self, flat):
        out, i = [], 0
        for s in self._shapes:
            n = int(np.prod(s))
            out.append(flat[i:i + n].reshape(s))
            i += n
        return out

    @classmethod
    def initialise(cls, num_states: int, num_actions: int, hidden: int,
                   rng: np.random.Generator) -> "MLPPolicy":
        """Symmetric uniform weights scaled by 1/sqrt(fan-in)."""
        X, U, H = num_states, num_actions, hidden
        parts = [
            rng.uniform(-1, 1, (H, 2 * X)) / math.sqrt(2 * X),
            rng.uniform(-1, 1, H) / math.sqrt(2 * X),
            rng.uniform(-1, 1, (U, H)) / math.sqrt(H),
            rng.uniform(-1, 1, U) / math.sqrt(H),
        ]
        return cls(X, U, H, np.concatenate([p.ravel() for p in parts]))

    def with_params(self, params) -> "MLPPolicy":
        return MLPPolicy(self.num_states, self.num_actions, self.hidden, params)

    def probs(self, mu):
        mu = np.asarray(mu, dtype=float)
        X = self.num_states
        pre = self.W1[:, :X].T + (mu @ self.W1[:, X:].T)[..., None, :] + self.b1   # (..., X, H)
        z = np.tanh(pre) @ self.W2.T + self.b2
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def log_prob_grads(self, xs, mus, us):
        """Batched log pi(u | x, mu) and its parameter gradient, by backpropagation."""
        xs = np.asarray(xs, dtype=np.int64)
        us = np.asarray(us, dtype=np.int64)
        mus = np.atleast_2d(np.asarray(mus, dtype=float))
        B = xs.size
        X, U = self.num_states, self.num_actions
        f = np.concatenate([np.eye(X)[xs], mus], axis=1)            # (B, 2X)
        h = np.tanh(f @ self.W1.T + self.b1)                        # (B, H)
        z = h @ self.W2.T + self.b2                                 # (B, U)
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        p = np.exp(z - lse[:, None])
        logp = z[np.arange(B), us] - lse
        dz = np.eye(U)[us] - p
        dh = dz @ self.W2
        da = dh * (1.0 - h * h)
        grad = np.concatenate([
            (da[:, :, None] * f[:, None, :]).reshape(B, -1),
            da,
            (dz[:, :, None] * h[:, None, :]).reshape(B, -1),
            dz,
        ], axis=1)
        floored = logp < math.log(LOG_FLOOR)
        if np.any(floored):
            logp = np.where(floored, math.log(LOG_FLOOR), logp)
            grad[floored] = 0.0
        return logp, grad

    def to_dict(self):
        return {"type": "mlp", "num_states": self.num_states, "num_actions": self.num_actions,
                "hidden": self.hidden, "params": self.params.tolist()}


register_policy_loader("mlp", lambda d: MLPPolicy(d["num_states"], d["num_actions"], d["hidden"], d["params"]))


def log_prob_and_grad(policy: MLPPolicy, x: int, mu, u: int) -> tuple[float, np.ndarray]:
    logp, grad = policy.log_prob_grads([x], [np.asarray(mu, float)], [u])
    return float(logp[0]), grad[0]


@dataclass
class TrainerConfig:
    eta: float = 1e-3
    alpha: float = 1e-3
    J: int = 100
    L: int = 100
    gamma: float = 0.9
    mu0: list | None = None
    seed: int = 0
    hidden: int = 128
    episode_cap: int | None = None
    w0: float = 0.0
    eval_trunc_tol: float = 1e-4

    def __post_init__(self):
        if self.eta < 0 or self.alpha < 0:
            raise ValueError("learning rates must be non-negative")
        if self.J < 1 or self.L < 1:
            raise ValueError("J and L must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("discount must be in [0, 1)")

    def cap(self) -> int:
        if self.episode_cap is not None:
            return int(self.episode_cap)
        return int(math.ceil(10.0 / (1.0 - self.gamma) - 1e-9))

    def initial_distribution(self, num_states: int) -> np.ndarray:
        return uniform(num_states) if self.mu0 is None else as_distribution(self.mu0, num_states)


@dataclass(frozen=True)
class OccupancySample:
    x: int
    mu: np.ndarray
    u: int
    advantage: float
    t: int
    q_branch: bool


class OccupancySampler:
    """Two-phase geometric sampler of (x, mu, u) from the discounted occupancy measure.

    The distribution path of the representative agent is deterministic, so the
    flow and its per-step policy, kernel and reward tables are built once and
    every chain indexes into them.
    """

    def __init__(self, policy: Policy, model: MeanFieldModel, mu0, gamma: float, episode_cap: int):
        if not 0.0 <= gamma < 1.0:
            raise ValueError("discount must be in [0, 1)")
        if episode_cap < 1:
            raise ValueError("episode_cap must be >= 1")
        self.policy, self.model, self.gamma, self.cap = policy, model, gamma, int(episode_cap)
        self.mu0 = as_distribution(mu0, model.num_states)
        self.flow = compute_flow(self.mu0, PolicySequence.stationary(policy), model, 2 * self.cap)
        self.pi = policy.probs(self.flow.mu)
        self.P = model.transition_table(self.flow.mu, self.flow.nu)
        self.R = model.reward_table(self.flow.mu, self.flow.nu)

    @property
    def truncation_bias(self) -> float:
        return self.model.m_r * self.gamma**self.cap / (1.0 - self.gamma)

    def _move(self, t, x, u, active, rng):
        n = x.size
        xn = sample_categorical(self.P[t, x, u], rng.random(n))
        un = sample_categorical(self.pi[t + 1, xn], rng.random(n))
        return np.where(active, xn, x), np.where(active, un, u)

    def sample_batch(self, rng: np.random.Generator, n: int) -> dict[str, np.ndarray]:
        X = self.model.num_states
        stop = 1.0 - self.gamma
        x = sample_categorical(np.broadcast_to(self.mu0, (n, X)), rng.random(n))
        u = sample_categorical(self.pi[0, x], rng.random(n))
        T = np.minimum(rng.geometric(stop, n) - 1, self.cap)
        for s in range(int(T.max(initial=0))):
            x, u = self._move(s, x, u, s < T, rng)
        q_branch = rng.random(n) < 0.5
        resampled = sample_categorical(self.pi[T, x], rng.random(n))
        xc, uc = x, np.where(q_branch, u, resampled)
        K = np.minimum(rng.geometric(stop, n), self.cap)
        total = np.zeros(n)
        for k in range(int(K.max(initial=0))):
            tt = T + k
            total += np.where(k < K, self.R[tt, xc, uc], 0.0)
            if k + 1 < K.max():
                xc, uc = self._move(tt, xc, uc, k + 1 < K, rng)
        adv = np.where(q_branch, 2.0 * total, -2.0 * total)
        return {"x": x, "u": u, "t": T, "mu": self.flow.mu[T], "advantage": adv, "q_branch": q_branch}


def sample_occupancy(policy: Policy, model: MeanFieldModel, mu0, gamma: float,
                     rng: np.random.Generator, episode_cap: int | None = None) -> OccupancySample:
    cap = episode_cap if episode_cap is not None else int(math.ceil(10.0 / (1.0 - gamma) - 1e-9))
    b = OccupancySampler(policy, model, mu0, gamma, cap).sample_batch(rng, 1)
    return OccupancySample(int(b["x"][0]), b["mu"][0], int(b["u"][0]), float(b["advantage"][0]),
                           int(b["t"][0]), bool(b["q_branch"][0]))


def npg_direction(policy: MLPPolicy, model: MeanFieldModel, config: TrainerConfig,
                  rng: np.random.Generator, sampler: OccupancySampler | None = None) -> np.ndarray:
    """Average SGD iterate for the compatible-function least-squares fit.

    Samples do not depend on ``w``, so all ``L`` are drawn before the
    sequential SGD pass.
    """
    if sampler is None:
        sampler = OccupancySampler(policy, model, config.initial_distribution(model.num_states),
                                   config.gamma, config.cap())
    batch = sampler.sample_batch(rng, config.L)
    _, G = policy.log_prob_grads(batch["x"], batch["mu"], batch["u"])
    target = batch["advantage"] / (1.0 - config.gamma)
    w = np.full(policy.dim, float(config.w0))
    acc = np.zeros(policy.dim)
    for l in range(config.L):
        g = G[l]
        h = (w @ g - target[l]) * g
        w = w - config.alpha * h
        if not np.all(np.isfinite(w)):
            raise FloatingPointError(
                f"non-finite NPG iterate at l={l}: |g|={np.abs(g).max():.3g}, "
                f"advantage={batch['advantage'][l]:.3g}, alpha={config.alpha}")
        acc += w
    return acc / config.L


@dataclass
class TrainResult:
    params: list[np.ndarray]
    values: list[float]
    initial_value: float
    uniform_value: float
    wall_times: list[float] = field(default_factory=list)
    T_used: int = 0

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.values))

    @property
    def best_value(self) -> float:
        return float(self.values[self.best_index])

    @property
    def average_value(self) -> float:
        return float(np.mean(self.values))


def train(config: TrainerConfig, model: MeanFieldModel, phi0: MLPPolicy | None = None,
          log=None) -> TrainResult:
    """Outer NPG loop; returns iterates 1..J with their mean-field values."""
    X, U = model.num_states, model.num_actions
    mu0 = config.initial_distribution(X)
    if phi0 is None:
        phi0 = MLPPolicy.initialise(X, U, config.hidden, np.random.default_rng(derive_seed(config.seed, 0)))
    rng = np.random.default_rng(derive_seed(config.seed, 1))
    tol = config.eval_trunc_tol
    v_uniform, _ = mean_field_value(mu0, TabularPolicy.uniform(X, U), model, config.gamma, tol)
    v0, T_used = mean_field_value(mu0, phi0, model, config.gamma, tol)
    policy = phi0
    params, values, times = [], [], []
    start = time.perf_counter()
    for j in range(config.J):
        w = npg_direction(policy, model, config, rng)
        policy = policy.with_params(policy.params + config.eta * w)
        v, _ = mean_field_value(mu0, policy, model, config.gamma, tol)
        params.append(policy.params)
        values.append(v)
        times.append(time.perf_counter() - start)
        if log is not None:
            log(j + 1, v)
    return TrainResult(params, values, v0, v_uniform, times, T_used)


def policy_at(result: TrainResult, template: MLPPolicy, index: int | None = None) -> MLPPolicy:
    i = result.best_index if index is None else index
    return template.with_params(result.params[i])


def save_checkpoint(path, policy: MLPPolicy, config: TrainerConfig, extra: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "architecture": {"type": "mlp-tanh-softmax", "num_states": policy.num_states,
                         "num_actions": policy.num_actions, "hidden": policy.hidden,
                         "features": "onehot(x) ++ mu", "layout": "W1,b1,W2,b2"},
        "params": policy.params.tolist(),
        "config": asdict(config),
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def load_checkpoint(path) -> tuple[MLPPolicy, TrainerConfig, dict]:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
    arch = payload["architecture"]
    policy = MLPPolicy(arch["num_states"], arch["num_actions"], arch["hidden"], payload["params"])
    return policy, TrainerConfig(**payload["config"]), payload.get("extra", {})


def write_training_curve(path, result: TrainResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "v_mf", "wall_time"])
        wr.writerow([0, repr(result.initial_value), repr(0.0)])
        for j, (v, t) in enumerate(zip(result.values, result.wall_times), start=1):
            wr.writerow([j, repr(v), repr(t)])
