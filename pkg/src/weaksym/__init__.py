"""Lie point symmetries of PDE systems in the smooth, distributional and Colombeau settings."""

__version__ = "0.1.0"
