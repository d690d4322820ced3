"""Differentially private SGD laboratory."""

__version__ = "0.1.0"
