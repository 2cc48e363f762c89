"""Lightweight building surface reconstruction from Gaussian-primitive
point sets and calibrated multi-view depth/normal maps."""

__version__ = "0.1.0"
