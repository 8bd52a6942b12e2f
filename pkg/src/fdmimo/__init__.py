"""Compressive channel estimation for hybrid full-dimensional MIMO."""

__version__ = "0.1.0"
