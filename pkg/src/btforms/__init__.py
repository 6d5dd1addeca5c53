"""Poincare-invariant two-body models in the instant, point, and front forms."""

__version__ = "0.1.0"
