"""Discrete Arakelov geometry on triangulated Riemann surfaces."""

__version__ = "0.1.0"
