"""The two-oscillator Hald system: full dynamics, Galerkin truncation,
first-order optimal prediction, conditioned canonical sampling, and the
Monte Carlo ensemble mean.

State layout for flat arrays is (q1, p1, q2, p2); reduced states are
(q1, p1).
"""

import math
from dataclasses import dataclass

import numpy as np

from .integrate import IntegratorConfig, adaptive_advance
from ._parallel import map_indexed


@dataclass
class HaldState:
    q1: float
    q2: float
    p1: float
    p2: float

    def as_array(self):
        return np.array([self.q1, self.p1, self.q2, self.p2])

    @classmethod
    def from_array(cls, a):
        return cls(q1=a[0], p1=a[1], q2=a[2], p2=a[3])


def _arr4(s):
    if isinstance(s, HaldState):
        return s.as_array()
    a = np.asarray(s, dtype=float)
    if a.shape != (4,):
        raise ValueError("expected a HaldState or a length-4 array (q1,p1,q2,p2)")
    return a


def hamiltonian(s):
    """H = (q1^2 + q2^2 + p1^2 + p2^2 + p1^2 p2^2) / 2."""
    q1, p1, q2, p2 = _arr4(s)
    return 0.5 * (q1 * q1 + q2 * q2 + p1 * p1 + p2 * p2 + p1 * p1 * p2 * p2)


def full_rhs(s):
    """Equations of motion of the full two-oscillator system."""
    q1, p1, q2, p2 = _arr4(s)
    return np.array([p1 + p1 * p2 * p2, -q1, p2 + p2 * p1 * p1, -q2])


def galerkin_rhs(r):
    """Truncated system with the hidden oscillator set to zero: pure rotation."""
    q1, p1 = r
    return np.array([p1, -q1])


def op_rhs(r, T=1.0):
    """First-order optimal prediction: the hidden p2^2 is replaced by its
    conditional mean T/(1 + p1^2)."""
    q1, p1 = r
    return np.array([p1 + p1 * T / (1.0 + p1 * p1), -q1])


def renormalized_hamiltonian(r, T=1.0):
    """Effective Hamiltonian of the reduced system, zero at the origin:
    (q1^2 + p1^2)/2 + (T/2) log(1 + p1^2).

    Conserved along op_rhs trajectories.
    """
    q1, p1 = r
    return 0.5 * (q1 * q1 + p1 * p1) + 0.5 * T * math.log1p(p1 * p1)


def sample_conditional(r, T, rng):
    """Draw the hidden oscillator from the canonical measure conditioned on
    (q1, p1): q2 ~ N(0, T), p2 ~ N(0, T/(1+p1^2)), independent."""
    q1, p1 = r
    q2 = rng.normal(scale=math.sqrt(T))
    p2 = rng.normal(scale=math.sqrt(T / (1.0 + p1 * p1)))
    return HaldState(q1=q1, q2=q2, p1=p1, p2=p2)


def _rhs_wrapper(t, y):
    return full_rhs(y)


def _realization_mean(i, r0, T, master_seed, times, config):
    rng = np.random.default_rng([master_seed, i])
    s = sample_conditional(r0, T, rng)
    traj = adaptive_advance(_rhs_wrapper, times[0], s.as_array(), times[-1],
                            config, times)
    return traj[:, :2]


def ensemble_mean_trajectory(r0, T, n_ensemble, times, master_seed,
                             tol=1e-6, workers=1):
    """Average (q1, p1) over n_ensemble full-system trajectories whose hidden
    coordinates are drawn by sample_conditional.

    Realization i uses the RNG stream (master_seed, i); the mean is reduced
    in realization-index order, so results do not depend on workers.
    Returns (means, stderr), each of shape (len(times), 2).
    """
    if n_ensemble < 1:
        raise ValueError("ensemble size must be >= 1")
    times = np.asarray(times, dtype=float)
    config = IntegratorConfig(tol=tol)
    trajs = map_indexed(_realization_mean, n_ensemble, workers,
                        args=(r0, T, master_seed, times, config))
    stack = np.stack(trajs)
    mean = stack.mean(axis=0)
    if n_ensemble > 1:
        se = stack.std(axis=0, ddof=1) / math.sqrt(n_ensemble)
    else:
        se = np.zeros_like(mean)
    return mean, se
