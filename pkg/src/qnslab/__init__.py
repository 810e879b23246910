"""Numerical laboratory for fractional Navier-Stokes mild solutions and Q-type norms."""

__version__ = "0.1.0"
