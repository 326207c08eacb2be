"""Normalized radial solutions of the mass-constrained p-Laplacian equation."""

__version__ = "0.1.0"
