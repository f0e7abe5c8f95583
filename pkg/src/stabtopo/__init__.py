"""Finite-strain topology optimization with stability constraints."""
__version__ = "0.1.0"
