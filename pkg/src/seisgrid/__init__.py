"""Seismic functionality-loss risk and retrofit planning for electric power networks."""

__version__ = "0.1.0"
