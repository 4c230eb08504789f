"""Figure rendering for qugrid simulation outputs.

Consumes only the simulator's documented CSV/JSON artifacts and renders
the four plot families: annotated time series, closed-form curve panels,
grouped bar comparisons, and node-count scaling lines.
"""

from .render import render
from .spec import FigureSpec, MissingInput, SchemaMismatch, load_spec

__version__ = "0.1.0"

__all__ = ["render", "FigureSpec", "MissingInput", "SchemaMismatch", "load_spec"]
