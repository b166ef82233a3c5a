"""Quadrature-free Galerkin methods on trainable Gaussian radial basis functions."""

__version__ = "0.1.0"
