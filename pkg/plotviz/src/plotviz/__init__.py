"""Render figure analogues from iontangle scenario datasets."""

from .figures import FigureSpec, PlotDataError, render

__version__ = "0.1.0"
__all__ = ["FigureSpec", "PlotDataError", "render", "__version__"]
