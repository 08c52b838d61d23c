from .render import (BASIN_CODES, BASIN_COLORS, FIGURE_KINDS, FigureSpec,
                     SchemaError, render)

__all__ = ["BASIN_CODES", "BASIN_COLORS", "FIGURE_KINDS", "FigureSpec",
           "SchemaError", "render"]
