"""Deterministic figure rendering for tidas experiment artifacts."""

from .io import SchemaError
from .render import FIGURE_KINDS, FigureSpec, render

__version__ = "0.1.0"
