"""Figures from design-based experiment metrics CSV files."""

__version__ = "0.1.0"

from .render import FigureSpec, SchemaMismatch, collect_series, load_metrics, render

__all__ = [
    "FigureSpec",
    "SchemaMismatch",
    "collect_series",
    "load_metrics",
    "render",
    "__version__",
]
