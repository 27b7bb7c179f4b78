"""Numerical laboratory for eigenfunction concentration on model surfaces."""

__version__ = "0.1.0"
