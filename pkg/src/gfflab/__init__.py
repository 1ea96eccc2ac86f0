"""Lattice Monte Carlo laboratory for sign-excursion decompositions of zero-boundary Gaussian fields."""

__version__ = "0.1.0"
