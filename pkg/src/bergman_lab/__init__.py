"""Numerical lab for Riemannian Bergman metrics from Laplace eigenbases."""

__version__ = "0.1.0"
