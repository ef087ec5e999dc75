"""Spiral ball-end toolpaths on holed surfaces from optimized scalar fields."""

__version__ = "0.1.0"
