"""Numerical laboratory for multiradial Loewner evolution and n-radial SLE."""

__version__ = "0.1.0"
