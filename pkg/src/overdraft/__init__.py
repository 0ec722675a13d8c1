"""Simulator of reputation-weighted loan networks for offline payments."""

__version__ = "0.1.0"
