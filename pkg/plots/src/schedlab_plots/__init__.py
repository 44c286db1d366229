"""Deterministic SVG figures from schedlab CSV metrics files."""

from .frame import MetricsFrame, SchemaError
from .render import FIGURE_KINDS, render

__all__ = ["MetricsFrame", "SchemaError", "FIGURE_KINDS", "render"]
