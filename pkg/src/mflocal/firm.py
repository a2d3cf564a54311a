"""Collaborative firms with quality levels 0..Q-1 choosing to idle (0) or invest (1)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MeanFieldModel, SpaceSpec

IDLE, INVEST = 0, 1


@dataclass(frozen=True)
class FirmConfig:
    Q: int = 10
    alpha_r: float = 1.0
    beta_r: float = 0.5
    lambda_r: float = 0.5

    def __post_init__(self):
        if self.Q < 2:
            raise ValueError("Q must be >= 2")
        if min(self.alpha_r, self.beta_r, self.lambda_r) < 0:
            raise ValueError("reward coefficients must be non-negative")


def firm_mean(mu) -> float | np.ndarray:
    mu = np.asarray(mu, dtype=float)
    m = mu @ np.arange(mu.shape[-1])
    return float(m) if np.ndim(m) == 0 else m


def improvement_scale(x, mean_quality, Q: int):
    """Upper end ``c`` of the uniform improvement draw: invest moves x to x + floor(chi * c)."""
    return (Q - 1 - np.asarray(x, dtype=float)) * (1.0 - np.asarray(mean_quality, dtype=float) / Q)


def _invest_rows(mean_quality: np.ndarray, Q: int) -> np.ndarray:
    """(..., Q, Q) matrix of next-state pmfs under investment, one row per current state."""
    mbar = np.asarray(mean_quality, dtype=float)[..., None]
    x = np.arange(Q)
    c = improvement_scale(x, mbar, Q)                       # (..., Q)
    k = np.arange(Q)
    safe_c = np.where(c > 0, c, 1.0)[..., None]
    # mass of cell [k, k+1) of the pushforward of Uniform[0, c]
    cell = np.clip(np.minimum(k + 1.0, c[..., None]) - k, 0.0, None) / safe_c   # (..., Q(x), Q(k))
    rows = np.zeros(cell.shape[:-2] + (Q, Q))
    for xi in range(Q):
        width = Q - xi
        rows[..., xi, xi:] = cell[..., xi, :width]
    stuck = c <= 0
    if np.any(stuck):
        rows[stuck] = 0.0
        idx = np.nonzero(stuck)
        rows[idx + (idx[-1],)] = 1.0
    return rows


def firm_transition_pmf(x: int, u: int, mu, cfg: FirmConfig) -> np.ndarray:
    Q = cfg.Q
    if not 0 <= x < Q or u not in (IDLE, INVEST):
        raise ValueError(f"invalid state/action ({x}, {u})")
    if u == IDLE:
        out = np.zeros(Q)
        out[x] = 1.0
        return out
    return _invest_rows(firm_mean(mu), Q)[x]


def firm_reward(x: int, u: int, mu, cfg: FirmConfig) -> float:
    if not 0 <= x < cfg.Q or u not in (IDLE, INVEST):
        raise ValueError(f"invalid state/action ({x}, {u})")
    return cfg.alpha_r * x - cfg.beta_r * firm_mean(mu) - cfg.lambda_r * u


def sample_firm_transition(x, u, mean_quality, Q: int, chi) -> np.ndarray:
    """Sampling form of the law: x + floor(chi * c) when investing, with chi ~ Uniform[0, 1]."""
    x = np.asarray(x)
    jump = np.floor(np.asarray(chi) * improvement_scale(x, mean_quality, Q)).astype(np.int64)
    return np.where(np.asarray(u) == INVEST, x + jump, x)


class FirmModel(MeanFieldModel):
    """Declared constants:

    * ``m_r = (alpha_r + beta_r)(Q-1) + lambda_r``
    * ``l_r = beta_r (Q-1)``, twice the slope of the mean over an L1 change in mu.
    * ``l_p = (Q-1)**2 / Q``: the improvement scale moves by at most
      ``(Q-1)/Q * |d mean|`` and the pmf of ``floor(chi c)`` by at most
      ``2 |dc|`` in L1, with ``|d mean| <= (Q-1)/2 |d mu|_1``.
    """

    def __init__(self, cfg: FirmConfig):
        Q = cfg.Q
        super().__init__(
            SpaceSpec(Q, 2),
            m_r=(cfg.alpha_r + cfg.beta_r) * (Q - 1) + cfg.lambda_r,
            l_r=cfg.beta_r * (Q - 1),
            l_p=(Q - 1) ** 2 / Q,
            action_dist_free=True,
            name=f"firm-Q{Q}",
        )
        self.cfg = cfg

    def reward_table(self, mu, nu):
        cfg = self.cfg
        mbar = firm_mean(mu)
        x = np.arange(cfg.Q, dtype=float)
        base = cfg.alpha_r * x - cfg.beta_r * np.asarray(mbar)[..., None]   # (..., Q)
        return base[..., None] - cfg.lambda_r * np.array([0.0, 1.0])

    def transition_table(self, mu, nu):
        Q = self.cfg.Q
        invest = _invest_rows(firm_mean(mu), Q)
        idle = np.broadcast_to(np.eye(Q), invest.shape)
        return np.stack([idle, invest], axis=-2)


def firm_model(cfg: FirmConfig) -> FirmModel:
    return FirmModel(cfg)
