"""Spectral computations on trees of finite cone type."""
__version__ = "0.1.0"
