"""Sparse dependency structure learning compiled into sparse feedforward regressors."""

__version__ = "0.1.0"
