"""Spectral and scattering numerics for one-dimensional Schroedinger and Dirac operators
with slowly decaying potentials."""

__version__ = "0.1.0"
