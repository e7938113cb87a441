"""Figure rendering for gramflow experiment artifacts (CSV in, PNG out)."""

from gramplot.render import DPI, FIGSIZE, KINDS, PlotSchemaError, PlotSpec, build_figure, render

__version__ = "0.1.0"

__all__ = [
    "DPI",
    "FIGSIZE",
    "KINDS",
    "PlotSchemaError",
    "PlotSpec",
    "build_figure",
    "render",
    "__version__",
]
