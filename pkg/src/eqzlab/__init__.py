"""Weighted Bergman kernels, equilibrium envelopes and random zeros on the Riemann sphere."""

__version__ = "0.1.0"
