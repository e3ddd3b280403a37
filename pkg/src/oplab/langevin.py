"""Langevin (Ornstein-Uhlenbeck) demonstrator of the fluctuation/dissipation
balance: du/dt = -gamma*u + n(t) with white noise of intensity noise_q
(autocovariance noise_q * delta), so the long-run variance is noise_q/(2*gamma).
"""

import math
from dataclasses import dataclass

import numpy as np

from .integrate import euler_maruyama_step


@dataclass(frozen=True)
class LangevinConfig:
    gamma: float
    noise_q: float
    T_target: float = 1.0
    h: float = 0.01
    t_end: float = 20.0
    n_ensemble: int = 1000

    def __post_init__(self):
        if self.noise_q < 0:
            raise ValueError("noise intensity must be >= 0")
        if self.h <= 0 or self.t_end <= 0:
            raise ValueError("h and t_end must be > 0")
        if self.n_ensemble < 1:
            raise ValueError("ensemble size must be >= 1")


def simulate_ou(cfg, u0, rng):
    """One Euler-Maruyama path; returns (times, u) with u[0] = u0.

    The per-step increment is sqrt(noise_q * h) * N(0,1).
    """
    n_steps = int(round(cfg.t_end / cfg.h))
    times = np.arange(n_steps + 1) * cfg.h
    u = np.empty(n_steps + 1)
    u[0] = u0
    amp = math.sqrt(cfg.noise_q)
    draws = rng.standard_normal(n_steps)
    y = np.array([u0])
    for j in range(n_steps):
        y = euler_maruyama_step(lambda v: -cfg.gamma * v, amp, y, cfg.h,
                                draws[j])
        u[j + 1] = y[0]
    return times, u


def _simulate_paths(cfg, u0, master_seed):
    """All ensemble paths at once, path i drawn from stream (master_seed, i).

    The step recursion is vectorized over paths; the noise of each path is
    pre-drawn from its own generator, so the result matches simulate_ou
    path by path.
    """
    n_steps = int(round(cfg.t_end / cfg.h))
    times = np.arange(n_steps + 1) * cfg.h
    draws = np.empty((cfg.n_ensemble, n_steps))
    for i in range(cfg.n_ensemble):
        draws[i] = np.random.default_rng([master_seed, i]).standard_normal(n_steps)
    u = np.empty((cfg.n_ensemble, n_steps + 1))
    u[:, 0] = u0
    decay = 1.0 - cfg.gamma * cfg.h
    amp = math.sqrt(cfg.noise_q * cfg.h)
    for j in range(n_steps):
        u[:, j + 1] = decay * u[:, j] + amp * draws[:, j]
    return times, u


def variance_trajectory(cfg, u0, master_seed):
    """Ensemble variance of u at each step time; returns (times, var)."""
    times, u = _simulate_paths(cfg, u0, master_seed)
    ddof = 1 if cfg.n_ensemble > 1 else 0
    return times, u.var(axis=0, ddof=ddof)


def stationary_variance_estimate(cfg, master_seed, u0=0.0):
    """Ensemble-and-time average of u^2 over the second half of each path.

    Requires t_end >= 10/gamma so the discarded first half covers the
    transient.  Returns (estimate, standard_error); the standard error is the
    spread of the per-path means over the ensemble.
    """
    if cfg.gamma <= 0:
        raise ValueError("stationary statistics require gamma > 0")
    if cfg.t_end < 10.0 / cfg.gamma:
        raise ValueError(
            f"t_end={cfg.t_end} too short for stationarity: need >= {10.0 / cfg.gamma}")
    _, u = _simulate_paths(cfg, u0, master_seed)
    half = u.shape[1] // 2
    per_path = (u[:, half:] ** 2).mean(axis=1)
    est = per_path.mean()
    if cfg.n_ensemble > 1:
        se = per_path.std(ddof=1) / math.sqrt(cfg.n_ensemble)
    else:
        se = 0.0
    return est, se
