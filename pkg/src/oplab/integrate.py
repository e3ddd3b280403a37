"""Deterministic and stochastic fixed-dimension time integrators.

All dynamical modules share the same classical fourth-order Runge-Kutta
stepper with step-doubling (Richardson) error control.  States are flat
float64 arrays; complex degrees of freedom are packed as real/imaginary
pairs by the callers.
"""

from dataclasses import dataclass

import numpy as np


class IntegrationError(RuntimeError):
    """Raised when a trajectory cannot be advanced (non-finite state or
    step-size underflow)."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Adaptive step control parameters.

    tol is a local error tolerance per unit time: a macro step of size h is
    accepted when the Richardson estimate is <= tol * h.
    """

    tol: float = 1e-8
    h_init: float = 1e-2
    h_min: float = 1e-12
    h_max: float = 0.25

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if not (0 < self.h_min <= self.h_init <= self.h_max):
            raise ValueError("require 0 < h_min <= h_init <= h_max")


def rk4_step(rhs, t, y, h):
    """One classical 4-stage Runge-Kutta step of size h > 0.

    rhs(t, y) must return an array of the same shape as y.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    out = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"non-finite state after rk4 step at t={t}")
    return out


def euler_maruyama_step(drift, noise_amplitude, y, h, gaussian_draw):
    """y + h*drift(y) + noise_amplitude*sqrt(h)*gaussian_draw, componentwise."""
    if h <= 0:
        raise ValueError("step size must be positive")
    return y + h * drift(y) + noise_amplitude * np.sqrt(h) * gaussian_draw


def _hermite(theta, h, y0, f0, y1, f1):
    """Cubic Hermite interpolant on one accepted step, theta in [0, 1]."""
    t2 = theta * theta
    t3 = t2 * theta
    return ((2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + theta) * h * f0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * f1)


def adaptive_advance(rhs, t0, y0, t1, config, output_times, on_step=None):
    """Advance y' = rhs(t, y) from t0 to t1 with step-doubling control on rk4.

    Returns an array of states of shape (len(output_times), len(y0)); the
    requested times must be increasing and lie within [t0, t1].  Output states
    come from cubic Hermite interpolation on the accepted steps, so the step
    sequence never depends on the requested output times.

    on_step(t, y), if given, is called once at the start of every macro step
    (rejected retries restart from the same state and do not re-trigger it).
    """
    if t1 <= t0:
        raise ValueError("require t1 > t0")
    times = np.asarray(output_times, dtype=float)
    if times.size == 0:
        raise ValueError("no output times requested")
    if np.any(np.diff(times) <= 0):
        raise ValueError("output times must be strictly increasing")
    if times[0] < t0 or times[-1] > t1:
        raise ValueError("output times must lie within [t0, t1]")

    y = np.array(y0, dtype=float)
    out = np.empty((times.size, y.size))
    next_out = 0
    while next_out < times.size and times[next_out] <= t0:
        out[next_out] = y
        next_out += 1

    t = t0
    h = config.h_init
    f_start = rhs(t0, y)
    while next_out < times.size:
        if on_step is not None:
            on_step(t, y)
        while True:
            h = min(h, config.h_max)
            y_big = rk4_step(rhs, t, y, h)
            y_half = rk4_step(rhs, t, y, 0.5 * h)
            y_small = rk4_step(rhs, t + 0.5 * h, y_half, 0.5 * h)
            err = np.max(np.abs(y_small - y_big)) / 15.0
            if err <= config.tol * h:
                break
            h *= 0.5
            if h < config.h_min:
                raise IntegrationError(
                    f"step size underflow at t={t}: h={h} < h_min={config.h_min}")
        t_new = t + h
        f_end = rhs(t_new, y_small)
        if not np.all(np.isfinite(f_end)):
            raise IntegrationError(f"non-finite derivative at t={t_new}")
        while next_out < times.size and times[next_out] <= t_new:
            theta = (times[next_out] - t) / h
            out[next_out] = _hermite(theta, h, y, f_start, y_small, f_end)
            next_out += 1
        y = y_small
        t = t_new
        f_start = f_end
        if err > 0.0:
            grow = 0.9 * (config.tol * h / err) ** 0.25
            h *= min(2.0, max(0.5, grow))
        else:
            h *= 2.0
        h = min(max(h, config.h_min), config.h_max)
    return out
