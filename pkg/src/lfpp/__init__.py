"""Numerical toolkit for log-correlated fields and their first-passage metrics."""

__version__ = "0.1.0"
