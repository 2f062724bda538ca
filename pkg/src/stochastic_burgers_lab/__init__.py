"""Pseudo-spectral stochastic Burgers simulator and verification lab."""

__version__ = "0.1.0"
