"""Spectral laboratory for nonlocal systems with antisymmetric potentials and half-harmonic maps."""

__version__ = "0.1.0"
