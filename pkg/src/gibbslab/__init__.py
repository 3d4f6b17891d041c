"""Numerical laboratory for unbounded lattice spin systems."""

__version__ = "0.1.0"
