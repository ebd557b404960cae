"""Foreground-aware image inpainting with explicit contour completion."""

__version__ = "0.1.0"
