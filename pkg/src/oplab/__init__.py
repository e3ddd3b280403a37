"""Numerical laboratory for first-order and stochastic optimal prediction:
the two-oscillator Hald system, the Langevin fluctuation/dissipation balance,
and the full pipeline for the 2D averaged Euler equations (equilibrium
sampling, Monte Carlo truth, correlation measurement, stochastic reduced
model)."""

__version__ = "0.1.0"

from ._kernels import backend_name

__all__ = ["backend_name", "__version__"]
