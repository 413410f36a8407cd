"""Post-processing plots for ringclock CSV output."""

__version__ = "0.1.0"

from .render import FigureSpec, RenderError, build_figure_spec, render

__all__ = ["FigureSpec", "RenderError", "build_figure_spec", "render"]
