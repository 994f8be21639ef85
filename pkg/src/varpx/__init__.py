"""Numerical laboratory for parabolic problems with variable p(t,x) growth."""

__version__ = "0.1.0"
