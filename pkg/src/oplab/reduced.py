"""Stochastic optimal-prediction reduced model: resolved modes driven by
their own interactions, a fluctuation/dissipation damping, and prescribed
colored noise standing in for the sampled region.

The noise autocovariance is Gaussian in the lag, so the paths are mean-square
smooth and the model is integrated as a random ODE with the shared adaptive
RK4 stepper; the damping diagonal is refrozen once per accepted macro step.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._parallel import map_indexed
from .integrate import IntegratorConfig, adaptive_advance
from .spectral import SpectralField, mode_variance
from .dynamics import GammaEvaluator, get_plan
from .ensemble import EnsembleResult, quadratic_of_mean, _quadratic_weights, _energy_weights


@dataclass
class NoiseProcess:
    """Precomputed colored Gaussian paths for the canonical sampled modes on
    a uniform grid; evaluation in between is linear, beyond the grid clamped.

    Each mode's path has autocovariance V(k) exp(-(t1-t2)^2 / sigma(k)^2)
    with V(k) the equilibrium variance, real and imaginary parts independent
    with variance V(k)/2; the Hermitian mirror is implicit.
    """

    times: np.ndarray
    amps: np.ndarray
    modes: list

    def at(self, t):
        dt = self.times[1] - self.times[0]
        pos = (t - self.times[0]) / dt
        j = int(math.floor(pos))
        if j < 0:
            return self.amps[0]
        if j >= len(self.times) - 1:
            return self.amps[-1]
        frac = pos - j
        return (1.0 - frac) * self.amps[j] + frac * self.amps[j + 1]


_factor_cache = {}


def _covariance_factor(sigma, variance, times):
    """Symmetric factor of the Gaussian-kernel covariance (variance/2) *
    exp(-(ti-tj)^2/sigma^2): Cholesky, then one jittered retry, then an
    eigenvalue square root with negative eigenvalues clipped (the kernel is
    positive semidefinite; the negatives are roundoff)."""
    key = (sigma, variance, len(times), times[1] - times[0])
    f = _factor_cache.get(key)
    if f is not None:
        return f
    d = times[:, None] - times[None, :]
    m = 0.5 * variance * np.exp(-(d / sigma) ** 2)
    try:
        f = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        try:
            f = np.linalg.cholesky(m + 1e-12 * variance * np.eye(len(times)))
        except np.linalg.LinAlgError:
            vals, vecs = np.linalg.eigh(m)
            f = vecs * np.sqrt(np.clip(vals, 0.0, None))
    _factor_cache[key] = f
    return f


def generate_noise(partition, params, width_model, t_end, grid_dt, rng):
    """Draw one NoiseProcess covering [0, t_end] for every canonical sampled
    mode, in lexicographic mode order.

    grid_dt must resolve the narrowest correlation width: grid_dt <=
    min sigma(k) / 8.
    """
    if t_end <= 0 or grid_dt <= 0:
        raise ValueError("t_end and grid_dt must be > 0")
    modes = partition.canonical_modes("sampled")
    sigmas = [width_model.sigma(math.hypot(*k)) for k in modes]
    if min(sigmas) <= 0:
        raise ValueError("correlation widths must be positive")
    if grid_dt > min(sigmas) / 8.0:
        raise ValueError(
            f"grid_dt={grid_dt} too coarse: need <= min sigma/8 = {min(sigmas) / 8.0}")
    n = int(math.ceil(t_end / grid_dt - 1e-9)) + 1
    times = np.arange(n) * grid_dt
    amps = np.empty((n, len(modes)), dtype=complex)
    for j, (k, sigma) in enumerate(zip(modes, sigmas)):
        v = mode_variance(k, params)
        factor = _covariance_factor(sigma, v, times)
        z = rng.standard_normal((n, 2))
        amps[:, j] = factor @ z[:, 0] + 1j * (factor @ z[:, 1])
    return NoiseProcess(times=times, amps=amps, modes=modes)


@dataclass
class ReducedState:
    field: SpectralField
    time: float = 0.0


def _reduced_deriv(plan, c_res, dv_samp, gamma_arr, kernels=None):
    """dc/dt on the resolved canonical modes: G1 - gamma*c + L(c) dv."""
    ker = kernels if kernels is not None else _kernels
    cf = plan.expand_subset(c_res, plan.res_sel)
    vf = plan.expand_subset(dv_samp, plan.samp_sel)
    n = len(plan.res_sel)
    acc = np.zeros(n, dtype=complex)
    ker.pair_accumulate(acc, cf, cf, *plan.g1)
    ker.pair_accumulate(acc, cf, vf, *plan.g2_rs)
    ker.pair_accumulate(acc, vf, cf, *plan.g2_sr)
    return -1j * acc - gamma_arr * c_res


def sop_rhs(state, noise, params, partition, width_model, sigma_at="resolved"):
    """Time derivative of the reduced model at the state's own time, with the
    damping evaluated at the current resolved field; returns a field
    supported on the resolved region."""
    plan = get_plan(partition, params)
    gamma_eval = GammaEvaluator(partition, params, width_model.sigma, sigma_at)
    c_res = state.field.amps[plan.res_sel]
    gamma_arr = gamma_eval.from_full(plan.expand_subset(c_res, plan.res_sel))
    dv = noise.at(state.time)
    d = _reduced_deriv(plan, c_res, dv, gamma_arr)
    amps = np.zeros(plan.n_canon, dtype=complex)
    amps[plan.res_sel] = d
    return state.field.with_amps(amps)


def _reduced_realization(i, cfg, width_model, sigma_at, grid_dt, noise_t_end):
    rng = np.random.default_rng([cfg.master_seed, i])
    noise = generate_noise(cfg.partition, cfg.params, width_model,
                           noise_t_end, grid_dt, rng)
    plan = get_plan(cfg.partition, cfg.params)
    gamma_eval = GammaEvaluator(cfg.partition, cfg.params,
                                width_model.sigma, sigma_at)
    gamma_arr = np.zeros(len(plan.res_sel))

    def on_step(t, y):
        c = np.ascontiguousarray(y).view(complex)
        gamma_arr[:] = gamma_eval.from_full(plan.expand_subset(c, plan.res_sel))

    def rhs(t, y):
        c = np.ascontiguousarray(y).view(complex)
        return _reduced_deriv(plan, c, noise.at(t), gamma_arr).view(float)

    y0 = cfg.initial_resolved.amps[plan.res_sel].astype(complex).view(float)
    config = IntegratorConfig(tol=cfg.tol, h_max=cfg.h_max)
    traj = adaptive_advance(rhs, 0.0, y0, cfg.output_times[-1], config,
                            cfg.output_times, on_step=on_step)
    return np.ascontiguousarray(traj).view(complex)


def run_reduced_ensemble(cfg, width_model, sigma_at="resolved", grid_dt=None):
    """Ensemble of reduced-model realizations; same configuration object,
    seeding contract and diagnostics as ensemble.run_ensemble, but only the
    resolved modes are evolved (result.modes lists them).

    Each realization owns a fresh NoiseProcess; grid_dt defaults to the
    precondition bound min sigma / 8.
    """
    if not cfg.initial_resolved.supported_on("resolved"):
        raise ValueError("initial field has amplitude outside the resolved region")
    plan = get_plan(cfg.partition, cfg.params)
    if grid_dt is None:
        grid_dt = width_model.min_sigma(cfg.partition) / 8.0
    # the last macro step may overshoot the horizon by up to h_max
    noise_t_end = cfg.output_times[-1] + cfg.h_max + grid_dt
    results = map_indexed(_reduced_realization, cfg.n_ensemble, cfg.workers,
                          args=(cfg, width_model, sigma_at, grid_dt, noise_t_end))
    states = np.stack(results)

    n = states.shape[0]
    mean_amps = states.mean(axis=0)
    if n > 1:
        se = (states.real.std(axis=0, ddof=1)
              + 1j * states.imag.std(axis=0, ddof=1)) / math.sqrt(n)
    else:
        se = np.zeros_like(mean_amps)
    w_aens = _quadratic_weights(plan.res_modes, cfg.params)
    w_en = _energy_weights(plan.res_modes, cfg.params)
    n_t = states.shape[1]
    aens = np.empty(n_t)
    aens_se = np.empty(n_t)
    en = np.empty(n_t)
    en_se = np.empty(n_t)
    for j in range(n_t):
        aens[j], aens_se[j] = quadratic_of_mean(states[:, j, :], w_aens)
        en[j], en_se[j] = quadratic_of_mean(states[:, j, :], w_en)
    per_real = np.sum(w_aens[None, None, :]
                      * (states.real ** 2 + states.imag ** 2), axis=2)
    norms_se = (per_real.std(axis=0, ddof=1) / math.sqrt(n)
                if n > 1 else np.zeros(n_t))
    return EnsembleResult(
        times=cfg.output_times, modes=plan.res_modes,
        mean_amps=mean_amps, se_amps=se,
        aens_of_mean=aens, aens_se=aens_se,
        aens_mean_of_norms=per_real.mean(axis=0), aens_norms_se=norms_se,
        energy_of_mean=en, energy_se=en_se)
