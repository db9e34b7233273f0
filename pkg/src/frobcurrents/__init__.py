"""Plane distributions, Lie brackets, forms and currents at desk scale."""

__version__ = "0.1.0"
