"""Pathwise fractional calculus, fractional SDEs and viability for fBm drivers."""

__version__ = "0.1.0"
