"""Heatmap-regression landmark detection benchmark for chest, head and hand x-rays."""
__version__ = "0.1.0"
