"""Monte Carlo driver for the full truncated system and the statistics
pipeline: ensemble means, time-correlation functions, Gaussian width fits,
and the sigma(k) = c/|k| width model.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import map_indexed
from .integrate import IntegratorConfig, adaptive_advance
from .spectral import a_operator, conditional_sample
from .dynamics import get_plan, make_full_rhs


@dataclass
class EnsembleConfig:
    n_ensemble: int
    output_times: np.ndarray
    master_seed: int
    partition: object
    params: object
    initial_resolved: object
    tol: float = 1e-6
    history_dt: float = 0.05
    h_max: float = 0.25
    workers: int = 1

    def __post_init__(self):
        self.output_times = np.asarray(self.output_times, dtype=float)
        if self.n_ensemble < 1:
            raise ValueError("ensemble size must be >= 1")
        if self.output_times.size == 0 or self.output_times[0] != 0.0:
            raise ValueError("output times must be nonempty and start at 0")
        if np.any(np.diff(self.output_times) <= 0):
            raise ValueError("output times must be strictly increasing")


@dataclass
class EnsembleResult:
    """Per-time ensemble means and scalar diagnostics.

    a_enstrophy_* diagnostics are computed over the resolved region (the
    region shared with the reduced model); energy is over all retained
    modes.  histories hold the sampled-region transverse amplitudes of every
    realization on the uniform history grid.
    """

    times: np.ndarray
    modes: list
    mean_amps: np.ndarray
    se_amps: np.ndarray
    aens_of_mean: np.ndarray
    aens_se: np.ndarray
    aens_mean_of_norms: np.ndarray
    aens_norms_se: np.ndarray
    energy_of_mean: np.ndarray
    energy_se: np.ndarray
    hist_times: np.ndarray | None = None
    histories: np.ndarray | None = None
    hist_modes: list = field(default_factory=list)


def _quadratic_weights(modes, params, region_test=None):
    w = np.empty(len(modes))
    for i, k in enumerate(modes):
        if region_test is not None and not region_test(k):
            w[i] = 0.0
        else:
            k2 = k[0] ** 2 + k[1] ** 2
            w[i] = k2 * a_operator(k, params) ** 2
    return w


def _energy_weights(modes, params):
    return np.array([a_operator(k, params) for k in modes])


def quadratic_of_mean(stack, weights):
    """Value and jackknife standard error of sum_k w_k |mean_k|^2 where the
    mean runs over axis 0 of stack."""
    n = stack.shape[0]
    tot = stack.sum(axis=0)
    mean = tot / n
    value = float(np.sum(weights * (mean.real ** 2 + mean.imag ** 2)))
    if n < 2:
        return value, 0.0
    loo = (tot[None, :] - stack) / (n - 1)
    vals = np.sum(weights[None, :] * (loo.real ** 2 + loo.imag ** 2), axis=1)
    se = math.sqrt((n - 1) / n * np.sum((vals - vals.mean()) ** 2))
    return value, se


def _full_realization(i, cfg, union_times, idx_out, idx_hist, samp_sel):
    rng = np.random.default_rng([cfg.master_seed, i])
    f0 = conditional_sample(cfg.initial_resolved, cfg.partition, cfg.params, rng)
    rhs = make_full_rhs(cfg.partition, cfg.params)
    y0 = f0.amps.astype(complex).view(float)
    config = IntegratorConfig(tol=cfg.tol, h_max=cfg.h_max)
    traj = adaptive_advance(rhs, 0.0, y0, union_times[-1], config, union_times)
    states = np.ascontiguousarray(traj).view(complex)
    return states[idx_out], states[idx_hist][:, samp_sel]


def run_ensemble(cfg):
    """Integrate n_ensemble realizations of the full truncated system from
    conditionally sampled initial data and average.

    Realization i draws from the stream (cfg.master_seed, i) and is
    integrated independently; the reduction runs in realization-index order,
    so the result is identical for any worker count.
    """
    plan = get_plan(cfg.partition, cfg.params)  # warm the cache before forking
    t_end = cfg.output_times[-1]
    if t_end > 0:
        n_hist = int(math.floor(t_end / cfg.history_dt + 1e-9)) + 1
        hist_times = np.arange(n_hist) * cfg.history_dt
        hist_times = np.minimum(hist_times, t_end)
    else:
        hist_times = np.array([0.0])
    union = np.unique(np.concatenate([cfg.output_times, hist_times]))
    idx_out = np.searchsorted(union, cfg.output_times)
    idx_hist = np.searchsorted(union, hist_times)
    if union[-1] <= 0.0:
        raise ValueError("the ensemble needs a positive time horizon")

    results = map_indexed(_full_realization, cfg.n_ensemble, cfg.workers,
                          args=(cfg, union, idx_out, idx_hist, plan.samp_sel))
    states = np.stack([r[0] for r in results])
    hists = np.stack([r[1] for r in results])

    return _summarize(cfg, plan, states, hist_times, hists)


def _summarize(cfg, plan, states, hist_times, hists):
    n = states.shape[0]
    mean_amps = states.mean(axis=0)
    if n > 1:
        se = (states.real.std(axis=0, ddof=1)
              + 1j * states.imag.std(axis=0, ddof=1)) / math.sqrt(n)
    else:
        se = np.zeros_like(mean_amps)

    modes = plan.canon_modes
    w_aens = _quadratic_weights(modes, cfg.params, cfg.partition.is_resolved)
    w_en = _energy_weights(modes, cfg.params)
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
    norms_mean = per_real.mean(axis=0)
    if n > 1:
        norms_se = per_real.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        norms_se = np.zeros(n_t)

    return EnsembleResult(
        times=cfg.output_times, modes=modes,
        mean_amps=mean_amps, se_amps=se,
        aens_of_mean=aens, aens_se=aens_se,
        aens_mean_of_norms=norms_mean, aens_norms_se=norms_se,
        energy_of_mean=en, energy_se=en_se,
        hist_times=hist_times, histories=hists,
        hist_modes=plan.samp_modes)


@dataclass
class CorrelationTable:
    """Per-mode autocovariance of the transverse amplitude fluctuation over a
    uniform lag grid; values[l, j] estimates C(modes[j], lags[l])."""

    modes: list
    lags: np.ndarray
    values: np.ndarray
    se_real: np.ndarray
    se_imag: np.ndarray
    n_ensemble: int


class FitError(RuntimeError):
    """A width fit did not have enough usable data."""


def estimate_correlations(histories, hist_times, modes, max_lag):
    """Autocovariance estimate averaged over realizations and time origins.

    histories has shape (n_ensemble, n_times, n_modes); fluctuations are
    taken about the per-time ensemble mean.  Lags exceeding the history span
    are rejected.
    """
    n_real, n_times, n_modes = histories.shape
    if n_real < 2:
        raise ValueError("correlation estimation needs >= 2 realizations")
    dt = hist_times[1] - hist_times[0]
    n_lag = int(math.floor(max_lag / dt + 1e-9))
    if n_lag > n_times - 2:
        raise ValueError(
            f"max lag {max_lag} exceeds the history span {hist_times[-1] - dt}")
    fluct = histories - histories.mean(axis=0, keepdims=True)
    lags = np.arange(n_lag + 1) * dt
    values = np.empty((n_lag + 1, n_modes), dtype=complex)
    se_r = np.empty((n_lag + 1, n_modes))
    se_i = np.empty((n_lag + 1, n_modes))
    sqrt_n = math.sqrt(n_real)
    for l in range(n_lag + 1):
        span = n_times - l
        prod = np.conj(fluct[:, :span, :]) * fluct[:, l:, :]
        per_real = prod.mean(axis=1)
        values[l] = per_real.mean(axis=0)
        se_r[l] = per_real.real.std(axis=0, ddof=1) / sqrt_n
        se_i[l] = per_real.imag.std(axis=0, ddof=1) / sqrt_n
    return CorrelationTable(modes=list(modes), lags=lags, values=values,
                            se_real=se_r, se_imag=se_i, n_ensemble=n_real)


def equal_time_cross_moments(histories):
    """Equal-time cross moments for the diagonality check.

    Returns (cross, cross_se, pseudo, pseudo_se): cross[j,l] estimates
    E[conj(du_j) du_l] averaged over time origins, pseudo[j,l] the
    unconjugated product E[du_j du_l] (zero for circular fluctuations, which
    also covers cross moments against the mirror modes -k).
    """
    n_real, n_times, n_modes = histories.shape
    fluct = histories - histories.mean(axis=0, keepdims=True)
    per_real = np.einsum("ntj,ntl->njl", np.conj(fluct), fluct) / n_times
    cross = per_real.mean(axis=0)
    cross_se = (np.abs(per_real - cross[None]) ** 2).mean(axis=0) ** 0.5 \
        / math.sqrt(n_real)
    pseudo_pr = np.einsum("ntj,ntl->njl", fluct, fluct) / n_times
    pseudo = pseudo_pr.mean(axis=0)
    pseudo_se = (np.abs(pseudo_pr - pseudo[None]) ** 2).mean(axis=0) ** 0.5 \
        / math.sqrt(n_real)
    return cross, cross_se, pseudo, pseudo_se


def fit_gaussian_width(table, k, threshold=0.1):
    """Width of C(tau) ~ C(0) exp(-tau^2/sigma^2) for one mode by zero-
    intercept least squares of log(C(tau)/C(0)) against -tau^2/sigma^2.

    Uses the contiguous run of positive lags with Re C(tau) above
    threshold * C(0); fewer than 3 usable lags is a fit failure.
    """
    j = table.modes.index(k)
    c = table.values[:, j].real
    c0 = c[0]
    if not c0 > 0:
        raise FitError(f"nonpositive zero-lag variance for mode {k}")
    usable = []
    for l in range(1, len(table.lags)):
        if c[l] > threshold * c0:
            usable.append(l)
        else:
            break
    if len(usable) < 3:
        raise FitError(f"only {len(usable)} usable lags for mode {k}")
    tau = table.lags[usable]
    y = np.log(c[usable] / c0)
    x = tau * tau
    slope = np.sum(x * y) / np.sum(x * x)
    if not slope < 0:
        raise FitError(f"non-decaying correlation for mode {k}")
    return math.sqrt(-1.0 / slope)


@dataclass(frozen=True)
class WidthModel:
    """sigma(k) = c / |k| with the fitted constant c; residual is the
    coefficient of variation of sigma(k)|k| over the fitted modes."""

    c: float
    residual: float
    widths: tuple

    def sigma(self, absk):
        return self.c / absk

    def min_sigma(self, partition):
        b = partition.sampled_bound
        return self.c / math.hypot(b, b)


def fit_width_model(widths):
    """Fit the single-constant model to per-mode widths {k: sigma}."""
    if len(widths) < 3:
        raise FitError("width model fit needs >= 3 fitted modes")
    prods = np.array([s * math.hypot(*k) for k, s in widths.items()])
    c = float(prods.mean())
    residual = float(prods.std() / c)
    return WidthModel(c=c, residual=residual, widths=tuple(sorted(widths.items())))


def fit_all_widths(table, threshold=0.1):
    """Fit every mode in a correlation table; returns ({k: sigma}, skipped)."""
    out, skipped = {}, []
    for k in table.modes:
        try:
            out[k] = fit_gaussian_width(table, k, threshold)
        except FitError:
            skipped.append(k)
    return out, skipped
