"""Figures from khm-lab CSV outputs."""

__version__ = "0.1.0"

from .figures import KINDS, FigureSpec, plot

__all__ = ["KINDS", "FigureSpec", "plot"]
