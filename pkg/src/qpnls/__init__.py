"""Spatially quasi-periodic nonlinear Schrodinger dynamics on truncated frequency lattices."""

__version__ = "0.1.0"
