"""Measurement statistics of quantum systems, from Born weights to wave packets."""

__version__ = "0.1.0"
