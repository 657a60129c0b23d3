"""Desk-scale planar navigation with imagined visual plans."""

__version__ = "0.1.0"
