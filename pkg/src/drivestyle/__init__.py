"""Explainable driving-style classification toolkit."""

__version__ = "0.1.0"
