"""Numerical laboratory for stochastic reaction-diffusion equations with Q-Wiener noise."""

__version__ = "0.1.0"
