"""Numerical verification of shearfree Lorentzian metrics of Kähler-Sasaki type."""

__version__ = "0.1.0"
