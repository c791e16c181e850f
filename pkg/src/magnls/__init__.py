"""Concentrating solutions of the semiclassical magnetic NLS on tensor-grid patches."""

__version__ = "0.1.0"
