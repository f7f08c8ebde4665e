"""Directional covariance/precision estimation diagnostics, single-index-model
estimators, and a seeded Monte-Carlo harness."""

__version__ = "0.1.0"
