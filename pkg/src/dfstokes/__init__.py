"""Divergence-free mixed finite elements for the 2D Stokes equation."""

__version__ = "0.1.0"
