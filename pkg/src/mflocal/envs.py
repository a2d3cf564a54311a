"""Synthetic environments with known Lipschitz metadata, used by tests and the bound checks."""
from __future__ import annotations

import numpy as np

from .core import MeanFieldModel, SpaceSpec


class AffineCoupledModel(MeanFieldModel):
    """Reward affine and transition a convex mixture in (mu, nu).

    reward(x,u,mu,nu) = base[x,u] + mu_w[x,u] @ mu + nu_w[x,u] @ nu
    P(x,u,mu,nu)      = (1-lam) K[x,u] + lam_mu * sum_k mu_k A[x,u,k] + lam_nu * sum_j nu_j B[x,u,j]

    with ``lam = lam_mu + lam_nu``. An L1 change ``d`` of a distribution moves
    a mixture of pmfs by at most ``|d|_1``, and an affine map with coefficient
    ``w`` by at most ``max|w| |d|_1``, which gives the declared constants.
    """

    def __init__(self, base, mu_w, nu_w, kernel, mu_kernels, nu_kernels, lam_mu, lam_nu,
                 name="affine-coupled"):
        base = np.asarray(base, float)
        X, U = base.shape
        self.base, self.mu_w, self.nu_w = base, np.asarray(mu_w, float), np.asarray(nu_w, float)
        self.kernel = np.asarray(kernel, float)
        self.mu_kernels = np.asarray(mu_kernels, float)
        self.nu_kernels = np.asarray(nu_kernels, float)
        self.lam_mu, self.lam_nu = float(lam_mu), float(lam_nu)
        if self.lam_mu < 0 or self.lam_nu < 0 or self.lam_mu + self.lam_nu > 1:
            raise ValueError("mixing weights must be non-negative and sum to at most 1")
        wmax_mu = np.abs(self.mu_w).max(initial=0.0)
        wmax_nu = np.abs(self.nu_w).max(initial=0.0)
        m_r = float((np.abs(base) + wmax_mu + wmax_nu).max())
        free = wmax_nu == 0.0 and self.lam_nu == 0.0
        super().__init__(SpaceSpec(X, U), m_r=m_r, l_r=float(max(wmax_mu, wmax_nu)),
                         l_p=max(self.lam_mu, self.lam_nu), action_dist_free=free, name=name)

    def reward_table(self, mu, nu):
        mu = np.asarray(mu, float)
        nu = np.asarray(nu, float)
        return (self.base + np.einsum("xuk,...k->...xu", self.mu_w, mu)
                + np.einsum("xuj,...j->...xu", self.nu_w, nu))

    def transition_table(self, mu, nu):
        mu = np.asarray(mu, float)
        nu = np.asarray(nu, float)
        lam = self.lam_mu + self.lam_nu
        out = (1.0 - lam) * self.kernel + self.lam_mu * np.einsum("xuky,...k->...xuy", self.mu_kernels, mu)
        if self.lam_nu:
            out = out + self.lam_nu * np.einsum("xujy,...j->...xuy", self.nu_kernels, nu)
        return out


def random_model(spaces: SpaceSpec, rng: np.random.Generator, coupling: float = 0.5,
                 reward_scale: float = 1.0, action_dist_free: bool = False) -> AffineCoupledModel:
    X, U = spaces.num_states, spaces.num_actions
    base = rng.uniform(-reward_scale, reward_scale, (X, U))
    mu_w = rng.uniform(-reward_scale, reward_scale, (X, U, X))
    nu_w = np.zeros((X, U, U)) if action_dist_free else rng.uniform(-reward_scale, reward_scale, (X, U, U))
    kernel = rng.dirichlet(np.ones(X), (X, U))
    mu_k = rng.dirichlet(np.ones(X), (X, U, X))
    nu_k = rng.dirichlet(np.ones(X), (X, U, U))
    if action_dist_free:
        lam_mu, lam_nu = coupling, 0.0
    else:
        lam_mu = lam_nu = coupling / 2
    return AffineCoupledModel(base, mu_w, nu_w, kernel, mu_k, nu_k, lam_mu, lam_nu, name="random")


def identity_model(spaces: SpaceSpec, reward=None) -> AffineCoupledModel:
    """States never change; reward ``reward[x, u]`` (zeros by default) with no coupling."""
    X, U = spaces.num_states, spaces.num_actions
    base = np.zeros((X, U)) if reward is None else np.asarray(reward, float)
    kernel = np.broadcast_to(np.eye(X)[:, None, :], (X, U, X)).copy()
    return AffineCoupledModel(base, np.zeros((X, U, X)), np.zeros((X, U, U)), kernel,
                              np.zeros((X, U, X, X)), np.zeros((X, U, U, X)), 0.0, 0.0,
                              name="identity")
