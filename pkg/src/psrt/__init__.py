"""Dimension-reduced partial separable (PS) reconstruction for dynamic MRI."""

__version__ = "0.1.0"
