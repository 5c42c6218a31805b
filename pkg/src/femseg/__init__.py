"""Convex multi-label segmentation on simplex meshes with P1/RT0 elements."""

__version__ = "0.1.0"
